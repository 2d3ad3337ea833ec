#include "synclip/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "synclip/errors.hpp"

namespace synclip {

namespace {

// Palette chosen so the photometric affine map never clamps inside the mouth
// box (mouth and face texture values stay in (0.286, 0.615) so a in [0.7,1.3],
// b in [-0.2,0.2] keeps them within [0,1]).
constexpr float kBackground = 0.12f;
constexpr float kMouthValue = 0.30f;
constexpr float kEyeOpen = 0.08f;
constexpr float kEyeLid = 0.55f;
constexpr float kTextureLo = 0.45f;
constexpr float kTextureHi = 0.61f;
constexpr float kFeatureFloor = 1e-3f;  // log floor inside the featurizer

// Carrier: fixed sum of sines, one per analysis band, each with an integer
// number of cycles per frame interval so every frame sees the same carrier
// energy and per-frame RMS stays exactly proportional to the mouth drive.
// Amplitudes span a wide log range: each band's log energy saturates at a
// different drive level, which makes the per-frame feature vector a genuinely
// multi-dimensional fingerprint of the level rather than a rank-1 curve.
constexpr int kNumBands = 16;
constexpr int kBandBins[kNumBands] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 11, 13, 15, 17, 20, 26, 33};
constexpr double kBandAmp[kNumBands] = {0.70, 0.10, 0.32, 0.05, 0.45, 0.15, 0.58, 0.07,
                                        0.24, 0.38, 0.04, 0.52, 0.12, 0.19, 0.03, 0.28};
constexpr double kBandPhase[kNumBands] = {0.9, 5.3, 2.1, 1.7, 4.2, 0.4, 3.6, 2.9,
                                          1.1, 4.8, 0.2, 3.1, 5.9, 2.5, 1.4, 0.7};

constexpr double kPi = 3.14159265358979323846;

double carrier_sample(int n, int spf) {
  double v = 0;
  for (int i = 0; i < kNumBands; ++i)
    v += kBandAmp[i] * std::sin(2.0 * kPi * kBandBins[i] * double(n % spf) / double(spf) + kBandPhase[i]);
  return v;
}

}  // namespace

float carrier_frame_rms() {
  double ss = 0;
  for (int i = 0; i < kNumBands; ++i) ss += kBandAmp[i] * kBandAmp[i] / 2.0;
  return float(std::sqrt(ss));
}

double band_amp(int band) { return kBandAmp[band]; }
double band_floor() { return double(kFeatureFloor); }


IdentityParams make_identity(int identity_id, uint64_t corpus_seed, const CorpusConfig& cfg) {
  IdentityParams id;
  id.identity_id = identity_id;
  Rng rng = Rng(corpus_seed).split("identity").split(uint64_t(identity_id));
  id.texture_seed = rng.next_u64();

  // face box with mild per-identity geometry jitter; margins keep the shifted
  // face inside the canvas for ambient offsets up to +-3 px
  Rng geo = rng.split("geometry");
  const int jx = geo.uniform_int(3) - 1;
  const int jy = geo.uniform_int(3) - 1;
  id.face_box = {6 + jx, 6 + jy, 26 + jx, 26 + jy};

  const int fw = id.face_box.width();
  const int cx = id.face_box.x0 + fw / 2;
  id.mouth_box = {cx - 5, id.face_box.y1 - 9, cx + 5, id.face_box.y1 - 2};
  id.eye_band = {id.face_box.x0 + 3, id.face_box.y0 + 5, id.face_box.x1 - 3, id.face_box.y0 + 8};

  check_contract(id.mouth_box.x0 > id.face_box.x0 && id.mouth_box.x1 < id.face_box.x1 &&
                     id.mouth_box.y0 > id.face_box.y0 && id.mouth_box.y1 < id.face_box.y1,
                 "mouth box must lie strictly inside the face box");
  (void)cfg;
  return id;
}

FactorTracks gen_tracks(Rng& rng, int T) {
  FactorTracks tr;
  tr.mouth_drive.resize(size_t(T));
  tr.dx.resize(size_t(T));
  tr.dy.resize(size_t(T));
  tr.blink.resize(size_t(T));

  float m = float(rng.uniform());
  int dx = rng.uniform_int(5) - 2;
  int dy = rng.uniform_int(5) - 2;
  int blink_left = 0;
  for (int t = 0; t < T; ++t) {
    tr.mouth_drive[size_t(t)] = m;
    tr.dx[size_t(t)] = dx;
    tr.dy[size_t(t)] = dy;
    tr.blink[size_t(t)] = blink_left > 0 ? 1 : 0;
    if (blink_left > 0)
      --blink_left;
    else if (rng.uniform() < 0.15)
      blink_left = 1;

    // reflected random walk keeps m in [0,1] with |step| <= 0.3 < 0.35
    float step = float(rng.uniform(-0.30, 0.30));
    m += step;
    if (m < 0) m = -m;
    if (m > 1) m = 2.0f - m;
    dx = std::clamp(dx + rng.uniform_int(3) - 1, -3, 3);
    dy = std::clamp(dy + rng.uniform_int(3) - 1, -3, 3);
  }
  return tr;
}

TensorF render_frame(const IdentityParams& id, float mouth_drive, int dx, int dy, bool blink,
                     const CorpusConfig& cfg) {
  const float m = std::clamp(mouth_drive, 0.0f, 1.0f);
  TensorF frame({cfg.C, cfg.H, cfg.W});
  frame.data.assign(size_t(cfg.C) * cfg.H * cfg.W, kBackground);

  // per-identity texture: 4x4 value-noise grid, bilinear across the face box
  float grid[4][4];
  {
    Rng tex(id.texture_seed);
    for (auto& row : grid)
      for (auto& v : row) v = float(tex.uniform(kTextureLo, kTextureHi));
  }
  const PixelBox face = id.face_box.shifted(dx, dy);
  const PixelBox mouth = id.mouth_box.shifted(dx, dy);
  const PixelBox eyes = id.eye_band.shifted(dx, dy);

  auto at = [&](int y, int x) -> float& { return frame.data[size_t(y) * cfg.W + x]; };

  for (int y = std::max(0, face.y0); y < std::min(cfg.H, face.y1); ++y) {
    for (int x = std::max(0, face.x0); x < std::min(cfg.W, face.x1); ++x) {
      const float u = (x - face.x0) / float(face.width() - 1) * 3.0f;
      const float v = (y - face.y0) / float(face.height() - 1) * 3.0f;
      const int u0 = std::min(2, int(u)), v0 = std::min(2, int(v));
      const float fu = u - u0, fv = v - v0;
      const float val = grid[v0][u0] * (1 - fu) * (1 - fv) + grid[v0][u0 + 1] * fu * (1 - fv) +
                        grid[v0 + 1][u0] * (1 - fu) * fv + grid[v0 + 1][u0 + 1] * fu * fv;
      at(y, x) = val;
    }
  }

  for (int y = std::max(0, eyes.y0); y < std::min(cfg.H, eyes.y1); ++y)
    for (int x = std::max(0, eyes.x0); x < std::min(cfg.W, eyes.x1); ++x) at(y, x) = blink ? kEyeLid : kEyeOpen;

  // mouth: dark ellipse with a soft half-pixel edge so the rendered aperture
  // varies continuously with the drive instead of snapping to pixel rows
  const float half_h = m * (mouth.height() / 2.0f);
  const float half_w = mouth.width() / 2.0f - 0.5f;
  const float cx = (mouth.x0 + mouth.x1 - 1) / 2.0f;
  const float cy = (mouth.y0 + mouth.y1 - 1) / 2.0f;
  if (half_h > 0) {
    for (int y = std::max(0, mouth.y0); y < std::min(cfg.H, mouth.y1); ++y) {
      for (int x = std::max(0, mouth.x0); x < std::min(cfg.W, mouth.x1); ++x) {
        const float ey = (y - cy) / half_h;
        const float ex = (x - cx) / half_w;
        const float rho = std::sqrt(ex * ex + ey * ey);
        const float edge_px = (1.0f - rho) * half_h;  // approx signed distance, + inside
        const float coverage = std::clamp(edge_px + 0.5f, 0.0f, 1.0f);
        if (coverage > 0) at(y, x) = coverage * kMouthValue + (1.0f - coverage) * at(y, x);
      }
    }
  }

  for (auto& px : frame.data) px = std::clamp(px, 0.0f, 1.0f);
  return frame;
}

std::vector<float> synth_audio(const FactorTracks& tracks, float noise_level, Rng& rng,
                               const CorpusConfig& cfg) {
  check_contract(noise_level >= 0, "noise_level must be nonnegative");
  const int T = tracks.length();
  const int spf = cfg.samples_per_frame;
  std::vector<float> wave(size_t(T) * spf);
  for (int t = 0; t < T; ++t) {
    const float m = tracks.mouth_drive[size_t(t)];  // zero-order hold per frame
    for (int n = 0; n < spf; ++n)
      wave[size_t(t) * spf + n] = m * float(carrier_sample(n, spf));
  }
  if (noise_level > 0)
    for (auto& s : wave) s += noise_level * float(rng.normal());
  return wave;
}

LayeredAudioFeatures audio_featurize(const std::vector<float>& wave, int T, int L, const CorpusConfig& cfg) {
  const int spf = cfg.samples_per_frame;
  check_contract(int64_t(wave.size()) == int64_t(T) * spf,
                 "audio_featurize: wave length must equal T * samples_per_frame");
  check_contract(L >= 1 && cfg.d_a == 16, "featurizer is frozen at d_a=16");

  LayeredAudioFeatures out;
  out.layers.resize(size_t(L));

  // layer 1: per-frame log band energies at fixed DFT bins, standardized per
  // band to [-1, 1] over the band's own dynamic range
  TensorF layer1({T, cfg.d_a});
  for (int t = 0; t < T; ++t) {
    const float* x = wave.data() + size_t(t) * spf;
    for (int j = 0; j < cfg.d_a; ++j) {
      const int k = kBandBins[j];
      double re = 0, im = 0;
      for (int n = 0; n < spf; ++n) {
        const double ang = 2.0 * kPi * k * n / double(spf);
        re += x[n] * std::cos(ang);
        im -= x[n] * std::sin(ang);
      }
      const double mag = 2.0 / spf * std::sqrt(re * re + im * im);
      const double lo = std::log(double(kFeatureFloor));
      const double hi = std::log(double(kFeatureFloor) + kBandAmp[j] * kBandAmp[j]);
      const double raw = std::log(double(kFeatureFloor) + mag * mag);
      layer1(t, j) = float((raw - 0.5 * (lo + hi)) / (0.5 * (hi - lo)));
    }
  }
  out.layers[0] = layer1;

  // higher layers: circular +-1 smoothing, fixed random projection, tanh.
  // Normalization constants and projection seeds are frozen design choices.
  for (int l = 1; l < L; ++l) {
    Rng proj_rng = Rng(0xfeae12d5u).split("featurizer_layer").split(uint64_t(l));
    TensorF W({cfg.d_a, cfg.d_a});
    std::vector<float> b(size_t(cfg.d_a));
    for (auto& w : W.data) w = float(proj_rng.normal() * 0.35);
    for (auto& bb : b) bb = float(proj_rng.uniform(-0.3, 0.3));
    const TensorF& prev = out.layers[size_t(l - 1)];
    TensorF cur({T, cfg.d_a});
    for (int t = 0; t < T; ++t) {
      const int tp = (t + T - 1) % T, tn = (t + 1) % T;
      for (int j = 0; j < cfg.d_a; ++j) {
        double acc = b[size_t(j)];
        for (int i = 0; i < cfg.d_a; ++i) {
          const float sm = (prev(tp, i) + prev(t, i) + prev(tn, i)) / 3.0f;
          acc += W(j, i) * sm;
        }
        cur(t, j) = 0.5f * float(std::tanh(acc));
      }
    }
    out.layers[size_t(l)] = cur;
  }

  out.concat = TensorF({T, L * cfg.d_a});
  for (int t = 0; t < T; ++t)
    for (int l = 0; l < L; ++l)
      for (int j = 0; j < cfg.d_a; ++j) out.concat(t, l * cfg.d_a + j) = out.layers[size_t(l)](t, j);
  return out;
}

Clip inject_lag(Clip clip, int delta, const CorpusConfig& cfg) {
  if (std::abs(delta) > cfg.lag_max)
    throw Error(ErrorKind::config, "inject_lag: |delta| exceeds lag_max=" + std::to_string(cfg.lag_max));
  const int spf = cfg.samples_per_frame;
  const int64_t n = int64_t(clip.wave.size());
  std::vector<float> shifted(clip.wave.size());
  const int64_t off = (int64_t(delta) * spf % n + n) % n;
  for (int64_t i = 0; i < n; ++i) shifted[size_t(i)] = clip.wave[size_t((i + off) % n)];
  clip.wave = std::move(shifted);
  clip.true_lag = delta;
  return clip;
}

std::vector<Clip> gen_corpus(uint64_t seed, int n_identities, int clips_per_identity, int T,
                             const CorpusConfig& cfg) {
  check_contract(n_identities >= 2, "gen_corpus: need at least 2 identities");
  check_contract(T >= 8, "gen_corpus: need T >= 8");
  if (T < 2 * cfg.lag_max + 2)
    throw Error(ErrorKind::config,
                "gen_corpus: T=" + std::to_string(T) + " too short for lag sweeps up to +-" +
                    std::to_string(cfg.lag_max) + " (need T >= " + std::to_string(2 * cfg.lag_max + 2) + ")");

  const int n_test = std::max(1, n_identities / 8);
  const int n_val = n_identities >= 4 ? std::max(1, n_identities / 8) : 0;

  std::vector<Clip> corpus;
  corpus.reserve(size_t(n_identities) * clips_per_identity);
  for (int id = 0; id < n_identities; ++id) {
    const IdentityParams identity = make_identity(id, seed, cfg);
    const char* split = id >= n_identities - n_test          ? "test"
                        : id >= n_identities - n_test - n_val ? "val"
                                                              : "train";
    for (int c = 0; c < clips_per_identity; ++c) {
      Rng clip_rng = Rng(seed).split("clip").split(uint64_t(id) * 100003 + uint64_t(c));
      Clip clip;
      clip.identity = identity;
      clip.split = split;
      clip.seed = clip_rng.split("meta").next_u64();
      Rng track_rng = clip_rng.split("tracks");
      clip.tracks = gen_tracks(track_rng, T);
      clip.frames = TensorF({T, cfg.C, cfg.H, cfg.W});
      for (int t = 0; t < T; ++t) {
        TensorF f = render_frame(identity, clip.tracks.mouth_drive[size_t(t)], clip.tracks.dx[size_t(t)],
                                 clip.tracks.dy[size_t(t)], clip.tracks.blink[size_t(t)] != 0, cfg);
        std::copy(f.data.begin(), f.data.end(),
                  clip.frames.data.begin() + int64_t(t) * cfg.C * cfg.H * cfg.W);
      }
      Rng audio_rng = clip_rng.split("audio");
      clip.wave = synth_audio(clip.tracks, cfg.noise_level, audio_rng, cfg);
      clip.true_lag = 0;
      corpus.push_back(std::move(clip));
    }
  }
  return corpus;
}

int motion_key(float mouth_drive, bool blink) {
  const int bucket = std::min(3, int(mouth_drive * 4.0f));
  return bucket * 2 + (blink ? 1 : 0);
}

int dark_extent_rel(const TensorF& frame, const PixelBox& mouth_box, float rel) {
  const int W = frame.shape[2];
  float lo = 1e9f, hi = -1e9f;
  for (int y = mouth_box.y0; y < mouth_box.y1; ++y)
    for (int x = mouth_box.x0; x < mouth_box.x1; ++x) {
      const float v = frame.data[size_t(y) * W + x];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const float thresh = lo + rel * (hi - lo);
  int rows = 0;
  for (int y = mouth_box.y0; y < mouth_box.y1; ++y) {
    float row_min = 1e9f;
    for (int x = mouth_box.x0; x < mouth_box.x1; ++x)
      row_min = std::min(row_min, frame.data[size_t(y) * W + x]);
    if (row_min <= thresh) ++rows;
  }
  return rows;
}

int dark_extent_abs(const TensorF& frame, const PixelBox& mouth_box, float thresh) {
  const int W = frame.shape[2];
  int rows = 0;
  for (int y = mouth_box.y0; y < mouth_box.y1; ++y) {
    bool dark = false;
    for (int x = mouth_box.x0; x < mouth_box.x1; ++x)
      dark = dark || frame.data[size_t(y) * W + x] < thresh;
    if (dark) ++rows;
  }
  return rows;
}

// --- disk layout: one directory per clip with frames.f32 / wave.f32 / meta.txt

namespace {

void write_floats(const std::filesystem::path& path, const float* data, size_t count) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw_io("cannot open for write: " + path.string());
  f.write(reinterpret_cast<const char*>(data), std::streamsize(count * sizeof(float)));
  if (!f) throw_io("short write: " + path.string());
}

std::vector<float> read_floats(const std::filesystem::path& path, size_t expect) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw_io("cannot open: " + path.string());
  const auto bytes = size_t(f.tellg());
  if (bytes != expect * sizeof(float))
    throw_io(path.string() + ": expected " + std::to_string(expect * sizeof(float)) + " bytes, found " +
             std::to_string(bytes));
  std::vector<float> out(expect);
  f.seekg(0);
  f.read(reinterpret_cast<char*>(out.data()), std::streamsize(bytes));
  if (!f) throw_io("short read: " + path.string());
  return out;
}

}  // namespace

void save_corpus(const std::vector<Clip>& corpus, const CorpusMeta& meta, const std::filesystem::path& dir,
                 const CorpusConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw_io("cannot create directory: " + dir.string());
  {
    std::ofstream root(dir / "corpus.txt");
    if (!root) throw_io("cannot open for write: " + (dir / "corpus.txt").string());
    root << "seed=" << meta.seed << "\n";
    root << "identities=" << meta.n_identities << "\n";
    root << "clips_per_id=" << meta.clips_per_identity << "\n";
    root << "T=" << meta.T << "\n";
  }
  int idx = 0;
  for (const auto& clip : corpus) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04d", idx++);
    const auto cdir = dir / name;
    std::filesystem::create_directories(cdir, ec);
    if (ec) throw_io("cannot create directory: " + cdir.string());
    write_floats(cdir / "frames.f32", clip.frames.data.data(), clip.frames.data.size());
    write_floats(cdir / "wave.f32", clip.wave.data(), clip.wave.size());
    std::ofstream m(cdir / "meta.txt");
    if (!m) throw_io("cannot open for write: " + (cdir / "meta.txt").string());
    m << "identity_id=" << clip.identity.identity_id << "\n";
    m << "T=" << clip.frames.shape[0] << "\n";
    m << "true_lag=" << clip.true_lag << "\n";
    m << "seed=" << clip.seed << "\n";
    m << "split=" << clip.split << "\n";
  }
  (void)cfg;
}

namespace {

std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw_io("cannot open: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw_io("malformed line in " + path.string() + ": " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

CorpusMeta read_corpus_meta(const std::filesystem::path& dir) {
  auto kv = read_kv_file(dir / "corpus.txt");
  for (const char* key : {"seed", "identities", "clips_per_id", "T"})
    if (!kv.count(key)) throw_io(std::string("corpus.txt missing key '") + key + "'");
  CorpusMeta meta;
  meta.seed = std::stoull(kv["seed"]);
  meta.n_identities = std::stoi(kv["identities"]);
  meta.clips_per_identity = std::stoi(kv["clips_per_id"]);
  meta.T = std::stoi(kv["T"]);
  return meta;
}

std::vector<Clip> load_corpus(const std::filesystem::path& dir, const CorpusConfig& cfg) {
  if (!std::filesystem::is_directory(dir)) throw_io("corpus directory not found: " + dir.string());
  const CorpusMeta cmeta = read_corpus_meta(dir);
  std::vector<std::filesystem::path> clip_dirs;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_directory() && e.path().filename().string().rfind("clip_", 0) == 0) clip_dirs.push_back(e.path());
  std::sort(clip_dirs.begin(), clip_dirs.end());
  if (clip_dirs.empty()) throw_io("no clip_* directories under: " + dir.string());

  // frames and wave are authoritative from disk; identity geometry and
  // ground-truth tracks are re-derived from the recorded generator inputs
  std::vector<Clip> corpus;
  std::map<int, int> clips_seen;  // identity -> count, recovers the clip index
  for (const auto& cdir : clip_dirs) {
    auto kv = read_kv_file(cdir / "meta.txt");
    for (const char* key : {"identity_id", "T", "true_lag", "seed"})
      if (!kv.count(key)) throw_io(std::string("meta.txt missing key '") + key + "' in " + cdir.string());

    Clip clip;
    const int id = std::stoi(kv["identity_id"]);
    const int T = std::stoi(kv["T"]);
    clip.true_lag = std::stoi(kv["true_lag"]);
    clip.seed = std::stoull(kv["seed"]);
    clip.split = kv.count("split") ? kv["split"] : "train";
    clip.identity = make_identity(id, cmeta.seed, cfg);
    const int c = clips_seen[id]++;
    Rng clip_rng = Rng(cmeta.seed).split("clip").split(uint64_t(id) * 100003 + uint64_t(c));
    Rng track_rng = clip_rng.split("tracks");
    clip.tracks = gen_tracks(track_rng, T);
    clip.frames = TensorF({T, cfg.C, cfg.H, cfg.W});
    clip.frames.data = read_floats(cdir / "frames.f32", size_t(T) * cfg.C * cfg.H * cfg.W);
    clip.wave = read_floats(cdir / "wave.f32", size_t(T) * cfg.samples_per_frame);
    corpus.push_back(std::move(clip));
  }
  return corpus;
}

}  // namespace synclip
