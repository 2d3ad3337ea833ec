#include "synclip/trainer.hpp"

#include <chrono>
#include <fstream>

#include "json.hpp"
#include "synclip/model.hpp"

namespace synclip {

namespace {

struct CorpusCache {
  std::vector<Clip> clips;
  std::vector<LayeredAudioFeatures> features;
  std::vector<PositiveSet> positives;
  std::vector<FaceWeights> weights;
  std::vector<int> train_indices;                 // clip indices in the train split
  std::map<int, std::vector<int>> train_by_identity;
};

CorpusCache prepare_corpus(const TrainConfig& cfg, const CorpusConfig& cc) {
  CorpusCache cache;
  if (cfg.data_dir.empty())
    cache.clips = gen_corpus(cfg.seed, cfg.corpus_identities, cfg.corpus_clips_per_id, cfg.corpus_T, cc);
  else
    cache.clips = load_corpus(cfg.data_dir, cc);

  for (size_t i = 0; i < cache.clips.size(); ++i) {
    const auto& clip = cache.clips[i];
    cache.features.push_back(audio_featurize(clip.wave, clip.frames.shape[0], cc.L, cc));
    cache.positives.push_back(positive_set(cache.features.back().concat, cfg.loss.k, cfg.loss.sim_threshold));
    cache.weights.push_back(face_keep_weights(clip.identity, cc, cfg.face_weight));
    if (clip.split == "train") {
      cache.train_indices.push_back(int(i));
      cache.train_by_identity[clip.identity.identity_id].push_back(int(i));
    }
  }
  bool has_pair = false;
  for (const auto& [id, v] : cache.train_by_identity) has_pair = has_pair || v.size() >= 2;
  if (!has_pair)
    throw Error(ErrorKind::config, "train split has no identity with two clips; cannot form batches");
  return cache;
}

std::vector<int> draw_batch(const CorpusCache& cache, int batch_clips, Rng& rng) {
  std::vector<int> eligible;
  for (const auto& [id, v] : cache.train_by_identity)
    if (v.size() >= 2) eligible.push_back(id);
  std::vector<int> batch;
  for (int g = 0; g < batch_clips / 2; ++g) {
    const int id = eligible[size_t(rng.uniform_int(int(eligible.size())))];
    const auto& clips = cache.train_by_identity.at(id);
    const int a = rng.uniform_int(int(clips.size()));
    int b = rng.uniform_int(int(clips.size()) - 1);
    if (b >= a) ++b;
    batch.push_back(clips[size_t(a)]);
    batch.push_back(clips[size_t(b)]);
  }
  return batch;
}


}  // namespace

// Shared by train() and the acceptance tooling: run the model+losses graph for
// one batch and return the loss bundle.
LossBundle<float> pretrain_step_loss(const ParamStore<float>& ps, const ModelConfig& mc,
                                     const std::vector<PreparedClip<float>>& batch,
                                     const std::vector<const PositiveSet*>& positives,
                                     const StepRandomness& rand, MaskMode mode, const LossWeights& lw) {
  auto out = forward_pretrain(ps, mc, batch, rand, mode);
  const int B = int(batch.size());
  Value<float> pix_voc, pix_aud, cl;
  for (int b = 0; b < B; ++b) {
    const int T = batch[size_t(b)].T();
    auto pv = loss_pix(out.recon_voc[size_t(b)], out.target[size_t(b)], T);
    auto pa = loss_pix(out.recon_aud[size_t(b)], out.target[size_t(b)], T);
    pix_voc = b ? add(pix_voc, pv) : pv;
    pix_aud = b ? add(pix_aud, pa) : pa;
  }
  pix_voc = scale(pix_voc, 1.0f / float(B));
  pix_aud = scale(pix_aud, 1.0f / float(B));

  if (lw.cross_clip) {
    // one softmax over all B*T candidates; positives stay within-clip
    auto A_all = concat_rows(out.audio_clip);
    PositiveSet P_all;
    int off = 0;
    for (int b = 0; b < B; ++b) {
      for (const auto& p : *positives[size_t(b)]) {
        std::vector<int> shifted;
        for (int s : p) shifted.push_back(s + off);
        P_all.push_back(std::move(shifted));
      }
      off += batch[size_t(b)].T();
    }
    if (lw.learnable_tau)
      cl = loss_contrastive(A_all, out.z_voc_all, P_all, ps.get("loss/log_tau"));
    else
      cl = loss_contrastive(A_all, out.z_voc_all, P_all, float(lw.tau));
  } else {
    for (int b = 0; b < B; ++b) {
      Value<float> c;
      if (lw.learnable_tau)
        c = loss_contrastive(out.audio_clip[size_t(b)], out.z_voc_clip[size_t(b)], *positives[size_t(b)],
                             ps.get("loss/log_tau"));
      else
        c = loss_contrastive(out.audio_clip[size_t(b)], out.z_voc_clip[size_t(b)], *positives[size_t(b)],
                             float(lw.tau));
      cl = b ? add(cl, c) : c;
    }
    cl = scale(cl, 1.0f / float(B));
  }

  auto cov = loss_cov(out.z_id_all, out.z_amb_all, out.z_voc_all);
  return total_loss(pix_voc, pix_aud, cl, cov, lw);
}

namespace {

StepRandomness draw_step_randomness(const TrainConfig& cfg, const CorpusConfig& cc, const CorpusCache& cache,
                                    const std::vector<int>& batch_clips, Rng& step_rng) {
  StepRandomness rand;
  std::vector<int> ids, keys;
  for (size_t b = 0; b < batch_clips.size(); ++b) {
    const Clip& clip = cache.clips[size_t(batch_clips[b])];
    const int T = clip.frames.shape[0];
    std::vector<FrameRand> frames;
    Rng clip_rng = step_rng.split("clip_rand").split(uint64_t(b));
    for (int t = 0; t < T; ++t) {
      FrameRand fr;
      Rng frame_rng = clip_rng.split(uint64_t(t));
      Rng r1 = frame_rng.split("uniform");
      fr.uniform_plan = sample_uniform_mask(cc.n_patches(), cfg.mask_ratio, r1);
      Rng r2 = frame_rng.split("face");
      fr.face_plan = sample_face_mask(cc.n_patches(), cfg.mask_ratio, cache.weights[size_t(batch_clips[b])], r2);
      if (cfg.mask_photometric) {
        Rng r3 = frame_rng.split("jitter");
        fr.jitter = draw_jitter(r3, cfg.jitter);
      }
      frames.push_back(std::move(fr));
      ids.push_back(clip.identity.identity_id);
      keys.push_back(motion_key(clip.tracks.mouth_drive[size_t(t)], clip.tracks.blink[size_t(t)] != 0));
    }
    rand.frames.push_back(std::move(frames));
  }
  Rng shuffle_rng = step_rng.split("shuffle");
  rand.id_perm = identity_shuffle_perm(ids, keys, shuffle_rng, cfg.loss.p_swap);
  return rand;
}

TrainResult run_loop(const TrainConfig& cfg, ParamStore<float>& params, Adam<float>& opt,
                     int64_t start_step) {
  const CorpusConfig cc = to_corpus_config(cfg);
  const ModelConfig mc = to_model_config(cfg);
  CorpusCache cache = prepare_corpus(cfg, cc);

  const std::filesystem::path out(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw_io("cannot create output directory: " + out.string());
  save_config_file(cfg, out / "config.txt");

  std::ofstream metrics(out / "metrics.jsonl", start_step > 0 ? std::ios::app : std::ios::trunc);
  if (!metrics) throw_io("cannot open metrics log under " + out.string());

  std::filesystem::path last_good = out / "ckpt_final";
  bool have_ckpt = false;
  TrainResult result;

  for (int64_t k = start_step; k < cfg.steps; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng step_rng = Rng(cfg.seed).split("step").split(uint64_t(k));
    Rng batch_rng = step_rng.split("batch");
    const auto batch_idx = draw_batch(cache, cfg.batch_clips, batch_rng);
    const StepRandomness rand = draw_step_randomness(cfg, cc, cache, batch_idx, step_rng);

    std::vector<PreparedClip<float>> batch;
    std::vector<const PositiveSet*> positives;
    for (size_t b = 0; b < batch_idx.size(); ++b) {
      const Clip& clip = cache.clips[size_t(batch_idx[b])];
      std::vector<JitterParams> jit;
      if (cfg.mask_photometric)
        for (const auto& fr : rand.frames[b]) jit.push_back(fr.jitter);
      batch.push_back(prepare_clip<float>(clip, cache.features[size_t(batch_idx[b])], jit, cc));
      positives.push_back(&cache.positives[size_t(batch_idx[b])]);
    }

    LossBundle<float> bundle;
    try {
      bundle = pretrain_step_loss(params, mc, batch, positives, rand, cfg.mask_mode_enum(), cfg.loss);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::numeric)
        throw Error(ErrorKind::numeric, std::string(e.what()) + " at step " + std::to_string(k) +
                                            (have_ckpt ? "; last good checkpoint: " + last_good.string()
                                                       : "; no checkpoint written yet"));
      throw;
    }

    auto grads = backward(bundle.total, params);
    clip_global_norm(grads, cfg.clip_norm);
    const double lr_now =
        cfg.warmup_steps > 0 ? cfg.lr * std::min<double>(1.0, double(k + 1) / cfg.warmup_steps) : cfg.lr;
    opt.set_lr(float(lr_now));
    opt.step(params, grads);

    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json rec{{"step", k + 1},
                       {"pix_voc", bundle.report.pix_voc},
                       {"pix_aud", bundle.report.pix_aud},
                       {"contrastive", bundle.report.contrastive},
                       {"cov", bundle.report.cov},
                       {"total", bundle.report.total},
                       {"lr", lr_now},
                       {"wall_ms", wall_ms}};
    metrics << rec.dump() << "\n";
    result.last_report = bundle.report;

    if (cfg.ckpt_every > 0 && (k + 1) % cfg.ckpt_every == 0 && (k + 1) < cfg.steps) {
      const auto dir = out / ("ckpt_" + std::to_string(k + 1));
      save_checkpoint(dir, params, opt, cfg);
      last_good = dir;
      have_ckpt = true;
    }
  }

  metrics.flush();
  save_checkpoint(out / "ckpt_final", params, opt, cfg);
  result.final_checkpoint = out / "ckpt_final";
  result.metrics_log = out / "metrics.jsonl";
  result.steps_done = cfg.steps;
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  const ModelConfig mc = to_model_config(cfg);
  ParamStore<float> params;
  init_params(params, mc, cfg.seed);
  if (cfg.loss.learnable_tau)
    params.create("loss/log_tau", TensorF::full({1}, float(std::log(cfg.loss.tau))));
  AdamConfig<float> ac;
  ac.lr = float(cfg.lr);
  ac.beta1 = float(cfg.beta1);
  ac.beta2 = float(cfg.beta2);
  ac.eps = float(cfg.adam_eps);
  Adam<float> opt(ac);
  return run_loop(cfg, params, opt, 0);
}

TrainResult train_resume(const std::filesystem::path& ckpt_dir, const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint ck = load_checkpoint(ckpt_dir);

  // refuse when any non-path config key disagrees with the checkpoint echo
  const auto current = config_items(cfg);
  std::string diffs;
  for (const auto& [key, value] : ck.config_echo) {
    if (key == "train.out" || key == "train.data" || key == "steps" || key == "train.ckpt_every") continue;
    auto it = current.find(key);
    if (it != current.end() && it->second != value)
      diffs += "\n  " + key + ": checkpoint '" + value + "' vs config '" + it->second + "'";
  }
  if (!diffs.empty()) throw Error(ErrorKind::config, "resume config mismatch:" + diffs);

  const ModelConfig mc = to_model_config(cfg);
  ParamStore<float> params;
  init_params(params, mc, cfg.seed);
  if (cfg.loss.learnable_tau)
    params.create("loss/log_tau", TensorF::full({1}, float(std::log(cfg.loss.tau))));
  AdamConfig<float> ac;
  ac.lr = float(cfg.lr);
  ac.beta1 = float(cfg.beta1);
  ac.beta2 = float(cfg.beta2);
  ac.eps = float(cfg.adam_eps);
  Adam<float> opt(ac);
  restore_checkpoint(ck, params, opt);
  if (params.step() >= cfg.steps) {
    TrainResult result;
    result.final_checkpoint = ckpt_dir;
    result.steps_done = params.step();
    return result;
  }
  return run_loop(cfg, params, opt, params.step());
}

}  // namespace synclip
