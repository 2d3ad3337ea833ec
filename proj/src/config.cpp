#include "synclip/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "synclip/errors.hpp"

namespace synclip {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw Error(ErrorKind::config, "expected on/off for " + key + ", got '" + v + "'");
}

std::string bool_str(bool b) { return b ? "on" : "off"; }

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream ss(v);
  T out;
  ss >> out;
  if (ss.fail() || !ss.eof()) throw Error(ErrorKind::config, "bad numeric value for " + key + ": '" + v + "'");
  return out;
}

std::string num_str(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

struct Field {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"seed",
       {[](TrainConfig& c, const std::string& v) { c.seed = parse_num<uint64_t>(v, "seed"); },
        [](const TrainConfig& c) { return std::to_string(c.seed); }}},
      {"steps",
       {[](TrainConfig& c, const std::string& v) { c.steps = parse_num<int>(v, "steps"); },
        [](const TrainConfig& c) { return std::to_string(c.steps); }}},
      {"batch.clips",
       {[](TrainConfig& c, const std::string& v) { c.batch_clips = parse_num<int>(v, "batch.clips"); },
        [](const TrainConfig& c) { return std::to_string(c.batch_clips); }}},
      {"corpus.identities",
       {[](TrainConfig& c, const std::string& v) { c.corpus_identities = parse_num<int>(v, "corpus.identities"); },
        [](const TrainConfig& c) { return std::to_string(c.corpus_identities); }}},
      {"corpus.clips_per_id",
       {[](TrainConfig& c, const std::string& v) {
          c.corpus_clips_per_id = parse_num<int>(v, "corpus.clips_per_id");
        },
        [](const TrainConfig& c) { return std::to_string(c.corpus_clips_per_id); }}},
      {"corpus.T",
       {[](TrainConfig& c, const std::string& v) { c.corpus_T = parse_num<int>(v, "corpus.T"); },
        [](const TrainConfig& c) { return std::to_string(c.corpus_T); }}},
      {"corpus.noise",
       {[](TrainConfig& c, const std::string& v) { c.corpus_noise = parse_num<double>(v, "corpus.noise"); },
        [](const TrainConfig& c) { return num_str(c.corpus_noise); }}},
      {"corpus.lag_max",
       {[](TrainConfig& c, const std::string& v) { c.corpus_lag_max = parse_num<int>(v, "corpus.lag_max"); },
        [](const TrainConfig& c) { return std::to_string(c.corpus_lag_max); }}},
      {"model.D",
       {[](TrainConfig& c, const std::string& v) { c.model_D = parse_num<int>(v, "model.D"); },
        [](const TrainConfig& c) { return std::to_string(c.model_D); }}},
      {"model.enc_blocks",
       {[](TrainConfig& c, const std::string& v) { c.enc_blocks = parse_num<int>(v, "model.enc_blocks"); },
        [](const TrainConfig& c) { return std::to_string(c.enc_blocks); }}},
      {"model.enc_heads",
       {[](TrainConfig& c, const std::string& v) { c.enc_heads = parse_num<int>(v, "model.enc_heads"); },
        [](const TrainConfig& c) { return std::to_string(c.enc_heads); }}},
      {"model.dec_blocks",
       {[](TrainConfig& c, const std::string& v) { c.dec_blocks = parse_num<int>(v, "model.dec_blocks"); },
        [](const TrainConfig& c) { return std::to_string(c.dec_blocks); }}},
      {"model.dec_heads",
       {[](TrainConfig& c, const std::string& v) { c.dec_heads = parse_num<int>(v, "model.dec_heads"); },
        [](const TrainConfig& c) { return std::to_string(c.dec_heads); }}},
      {"model.adapter_hidden",
       {[](TrainConfig& c, const std::string& v) { c.adapter_hidden = parse_num<int>(v, "model.adapter_hidden"); },
        [](const TrainConfig& c) { return std::to_string(c.adapter_hidden); }}},
      {"model.final_ln",
       {[](TrainConfig& c, const std::string& v) { c.final_ln = parse_bool(v, "model.final_ln"); },
        [](const TrainConfig& c) { return bool_str(c.final_ln); }}},
      {"mask.mode",
       {[](TrainConfig& c, const std::string& v) {
          if (v != "two_bypass" && v != "uniform_only" && v != "face_only")
            throw Error(ErrorKind::config, "mask.mode must be two_bypass|uniform_only|face_only, got '" + v + "'");
          c.mask_mode = v;
        },
        [](const TrainConfig& c) { return c.mask_mode; }}},
      {"mask.photometric",
       {[](TrainConfig& c, const std::string& v) { c.mask_photometric = parse_bool(v, "mask.photometric"); },
        [](const TrainConfig& c) { return bool_str(c.mask_photometric); }}},
      {"mask.ratio",
       {[](TrainConfig& c, const std::string& v) { c.mask_ratio = parse_num<double>(v, "mask.ratio"); },
        [](const TrainConfig& c) { return num_str(c.mask_ratio); }}},
      {"mask.face_weight",
       {[](TrainConfig& c, const std::string& v) { c.face_weight = parse_num<double>(v, "mask.face_weight"); },
        [](const TrainConfig& c) { return num_str(c.face_weight); }}},
      {"jitter.a_min",
       {[](TrainConfig& c, const std::string& v) { c.jitter.a_min = parse_num<float>(v, "jitter.a_min"); },
        [](const TrainConfig& c) { return num_str(c.jitter.a_min); }}},
      {"jitter.a_max",
       {[](TrainConfig& c, const std::string& v) { c.jitter.a_max = parse_num<float>(v, "jitter.a_max"); },
        [](const TrainConfig& c) { return num_str(c.jitter.a_max); }}},
      {"jitter.b_min",
       {[](TrainConfig& c, const std::string& v) { c.jitter.b_min = parse_num<float>(v, "jitter.b_min"); },
        [](const TrainConfig& c) { return num_str(c.jitter.b_min); }}},
      {"jitter.b_max",
       {[](TrainConfig& c, const std::string& v) { c.jitter.b_max = parse_num<float>(v, "jitter.b_max"); },
        [](const TrainConfig& c) { return num_str(c.jitter.b_max); }}},
      {"audio.mode",
       {[](TrainConfig& c, const std::string& v) {
          if (v != "concat_adapter" && v != "last_layer_only")
            throw Error(ErrorKind::config, "audio.mode must be concat_adapter|last_layer_only, got '" + v + "'");
          c.audio_mode = v;
        },
        [](const TrainConfig& c) { return c.audio_mode; }}},
      {"decoder.cross_attention",
       {[](TrainConfig& c, const std::string& v) { c.cross_attention = parse_bool(v, "decoder.cross_attention"); },
        [](const TrainConfig& c) { return bool_str(c.cross_attention); }}},
      {"loss.lambda_pix",
       {[](TrainConfig& c, const std::string& v) { c.loss.lambda_pix = parse_num<double>(v, "loss.lambda_pix"); },
        [](const TrainConfig& c) { return num_str(c.loss.lambda_pix); }}},
      {"loss.lambda_cl",
       {[](TrainConfig& c, const std::string& v) { c.loss.lambda_cl = parse_num<double>(v, "loss.lambda_cl"); },
        [](const TrainConfig& c) { return num_str(c.loss.lambda_cl); }}},
      {"loss.lambda_cov",
       {[](TrainConfig& c, const std::string& v) { c.loss.lambda_cov = parse_num<double>(v, "loss.lambda_cov"); },
        [](const TrainConfig& c) { return num_str(c.loss.lambda_cov); }}},
      {"loss.tau",
       {[](TrainConfig& c, const std::string& v) { c.loss.tau = parse_num<double>(v, "loss.tau"); },
        [](const TrainConfig& c) { return num_str(c.loss.tau); }}},
      {"loss.k",
       {[](TrainConfig& c, const std::string& v) { c.loss.k = parse_num<int>(v, "loss.k"); },
        [](const TrainConfig& c) { return std::to_string(c.loss.k); }}},
      {"loss.sim_threshold",
       {[](TrainConfig& c, const std::string& v) {
          c.loss.sim_threshold = parse_num<double>(v, "loss.sim_threshold");
        },
        [](const TrainConfig& c) { return num_str(c.loss.sim_threshold); }}},
      {"loss.p_swap",
       {[](TrainConfig& c, const std::string& v) { c.loss.p_swap = parse_num<double>(v, "loss.p_swap"); },
        [](const TrainConfig& c) { return num_str(c.loss.p_swap); }}},
      {"loss.learnable_tau",
       {[](TrainConfig& c, const std::string& v) { c.loss.learnable_tau = parse_bool(v, "loss.learnable_tau"); },
        [](const TrainConfig& c) { return bool_str(c.loss.learnable_tau); }}},
      {"loss.cross_clip",
       {[](TrainConfig& c, const std::string& v) { c.loss.cross_clip = parse_bool(v, "loss.cross_clip"); },
        [](const TrainConfig& c) { return bool_str(c.loss.cross_clip); }}},
      {"optim.lr",
       {[](TrainConfig& c, const std::string& v) { c.lr = parse_num<double>(v, "optim.lr"); },
        [](const TrainConfig& c) { return num_str(c.lr); }}},
      {"optim.beta1",
       {[](TrainConfig& c, const std::string& v) { c.beta1 = parse_num<double>(v, "optim.beta1"); },
        [](const TrainConfig& c) { return num_str(c.beta1); }}},
      {"optim.beta2",
       {[](TrainConfig& c, const std::string& v) { c.beta2 = parse_num<double>(v, "optim.beta2"); },
        [](const TrainConfig& c) { return num_str(c.beta2); }}},
      {"optim.eps",
       {[](TrainConfig& c, const std::string& v) { c.adam_eps = parse_num<double>(v, "optim.eps"); },
        [](const TrainConfig& c) { return num_str(c.adam_eps); }}},
      {"optim.clip_norm",
       {[](TrainConfig& c, const std::string& v) { c.clip_norm = parse_num<double>(v, "optim.clip_norm"); },
        [](const TrainConfig& c) { return num_str(c.clip_norm); }}},
      {"optim.warmup",
       {[](TrainConfig& c, const std::string& v) { c.warmup_steps = parse_num<int>(v, "optim.warmup"); },
        [](const TrainConfig& c) { return std::to_string(c.warmup_steps); }}},
      {"train.ckpt_every",
       {[](TrainConfig& c, const std::string& v) { c.ckpt_every = parse_num<int>(v, "train.ckpt_every"); },
        [](const TrainConfig& c) { return std::to_string(c.ckpt_every); }}},
      {"train.out",
       {[](TrainConfig& c, const std::string& v) { c.out_dir = v; },
        [](const TrainConfig& c) { return c.out_dir; }}},
      {"train.data",
       {[](TrainConfig& c, const std::string& v) { c.data_dir = v; },
        [](const TrainConfig& c) { return c.data_dir; }}},
  };
  return table;
}

}  // namespace

void config_set(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto it = fields().find(key);
  if (it == fields().end()) throw Error(ErrorKind::config, "unknown config key: '" + key + "'");
  it->second.set(cfg, value);
}

std::map<std::string, std::string> config_items(const TrainConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : fields()) out[key] = field.get(cfg);
  return out;
}

void apply_config_line(TrainConfig& cfg, const std::string& raw) {
  const std::string line = trim(raw);
  if (line.empty() || line[0] == '#') return;
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw Error(ErrorKind::config, "malformed config line (want key = value): " + line);
  config_set(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
}

TrainConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw_io("cannot open config file: " + path.string());
  TrainConfig cfg;
  std::string line;
  while (std::getline(f, line)) apply_config_line(cfg, line);
  cfg.validate();
  return cfg;
}

void save_config_file(const TrainConfig& cfg, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw_io("cannot open config file for write: " + path.string());
  for (const auto& [key, value] : config_items(cfg)) f << key << " = " << value << "\n";
}

void TrainConfig::validate() const {
  if (steps < 0) throw Error(ErrorKind::config, "steps must be nonnegative");
  if (batch_clips < 2 || batch_clips % 2 != 0)
    throw Error(ErrorKind::config, "batch.clips must be an even number >= 2 (same-identity pairs)");
  if (corpus_identities < 2) throw Error(ErrorKind::config, "corpus.identities must be >= 2");
  if (corpus_clips_per_id < 2)
    throw Error(ErrorKind::config, "corpus.clips_per_id must be >= 2 so shuffle partners exist");
  if (corpus_T < 2 * corpus_lag_max + 2)
    throw Error(ErrorKind::config, "corpus.T too short for the configured lag range");
  if (mask_ratio <= 0 || mask_ratio >= 1) throw Error(ErrorKind::config, "mask.ratio must lie in (0,1)");
  if (lr <= 0) throw Error(ErrorKind::config, "optim.lr must be positive");
  loss.validate();
  to_model_config(*this).validate();
}

MaskMode TrainConfig::mask_mode_enum() const {
  if (mask_mode == "two_bypass") return MaskMode::two_bypass;
  if (mask_mode == "uniform_only") return MaskMode::uniform_only;
  return MaskMode::face_only;
}

CorpusConfig to_corpus_config(const TrainConfig& cfg) {
  CorpusConfig c;
  c.T = cfg.corpus_T;
  c.noise_level = float(cfg.corpus_noise);
  c.lag_max = cfg.corpus_lag_max;
  return c;
}

ModelConfig to_model_config(const TrainConfig& cfg) {
  ModelConfig m;
  m.D = cfg.model_D;
  m.enc_blocks = cfg.enc_blocks;
  m.enc_heads = cfg.enc_heads;
  m.dec_blocks = cfg.dec_blocks;
  m.dec_heads = cfg.dec_heads;
  m.adapter_hidden = cfg.adapter_hidden;
  m.final_ln = cfg.final_ln;
  m.cross_attention = cfg.cross_attention;
  m.audio_mode = cfg.audio_mode == "last_layer_only" ? AudioMode::last_layer_only : AudioMode::concat_adapter;
  const CorpusConfig c = to_corpus_config(cfg);
  m.n_patches = c.n_patches();
  m.patch_dim = c.patch * c.patch * c.C;
  m.audio_width = c.concat_width();
  m.d_a = c.d_a;
  m.L = c.L;
  return m;
}

void apply_variant(TrainConfig& cfg, const std::string& variant) {
  if (variant == "ours") return;
  if (variant == "A1")
    cfg.mask_mode = "uniform_only";
  else if (variant == "A2")
    cfg.mask_mode = "face_only";
  else if (variant == "A3")
    cfg.mask_photometric = false;
  else if (variant == "B1")
    cfg.audio_mode = "last_layer_only";
  else if (variant == "C1")
    cfg.cross_attention = false;
  else
    throw Error(ErrorKind::config, "unknown ablation variant: '" + variant + "' (want A1|A2|A3|B1|C1|ours)");
}

}  // namespace synclip
