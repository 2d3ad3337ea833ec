#include "synclip/verify.hpp"

#include <sstream>

#include "synclip/losses.hpp"
#include "synclip/model.hpp"

namespace synclip {

GradCheckReport full_loss_grad_check(const TrainConfig& cfg, const GradCheckOptions& opt) {
  const CorpusConfig cc = to_corpus_config(cfg);
  const ModelConfig mc = to_model_config(cfg);
  const int B = 2, T = 2;

  // two clips of the same identity so the shuffle path has partners
  auto corpus = gen_corpus(cfg.seed, 2, 2, cfg.corpus_T, cc);
  std::vector<PreparedClip<double>> batch;
  for (int b = 0; b < B; ++b) {
    Clip clip = corpus[size_t(b)];
    clip.frames.shape[0] = T;
    clip.frames.data.resize(size_t(T) * cc.C * cc.H * cc.W);
    clip.wave.resize(size_t(T) * cc.samples_per_frame);
    clip.tracks.mouth_drive.resize(size_t(T));
    clip.tracks.dx.resize(size_t(T));
    clip.tracks.dy.resize(size_t(T));
    clip.tracks.blink.resize(size_t(T));
    auto feats = audio_featurize(clip.wave, T, cc.L, cc);
    std::vector<JitterParams> jit;
    Rng jr = Rng(cfg.seed).split("verify_jitter").split(uint64_t(b));
    for (int t = 0; t < T; ++t) jit.push_back(draw_jitter(jr, cfg.jitter));
    batch.push_back(prepare_clip<double>(clip, feats, jit, cc));
  }

  StepRandomness rand;
  Rng rr = Rng(cfg.seed).split("verify_masks");
  std::vector<int> ids, keys;
  for (int b = 0; b < B; ++b) {
    std::vector<FrameRand> frames;
    for (int t = 0; t < T; ++t) {
      FrameRand fr;
      Rng frame_rng = rr.split(uint64_t(b * T + t));
      Rng r1 = frame_rng.split("uniform");
      fr.uniform_plan = sample_uniform_mask(cc.n_patches(), cfg.mask_ratio, r1);
      auto weights = face_keep_weights(corpus[size_t(b)].identity, cc, cfg.face_weight);
      Rng r2 = frame_rng.split("face");
      fr.face_plan = sample_face_mask(cc.n_patches(), cfg.mask_ratio, weights, r2);
      frames.push_back(std::move(fr));
      ids.push_back(batch[size_t(b)].identity_id);
      keys.push_back(batch[size_t(b)].motion_keys[size_t(t)]);
    }
    rand.frames.push_back(std::move(frames));
  }
  Rng sr = Rng(cfg.seed).split("verify_shuffle");
  rand.id_perm = identity_shuffle_perm(ids, keys, sr, cfg.loss.p_swap);

  std::vector<PositiveSet> positives;
  for (int b = 0; b < B; ++b)
    positives.push_back(positive_set(batch[size_t(b)].audio.cast<float>(), cfg.loss.k, cfg.loss.sim_threshold));

  const LossWeights lw = cfg.loss;
  const MaskMode mode = cfg.mask_mode_enum();
  auto fn = [&](ParamStore<double>& ps) {
    auto out = forward_pretrain(ps, mc, batch, rand, mode);
    Value<double> pix_voc, pix_aud, cl;
    for (int b = 0; b < B; ++b) {
      auto pv = loss_pix(out.recon_voc[size_t(b)], out.target[size_t(b)], T);
      auto pa = loss_pix(out.recon_aud[size_t(b)], out.target[size_t(b)], T);
      Value<double> c;
      if (lw.learnable_tau)
        c = loss_contrastive(out.audio_clip[size_t(b)], out.z_voc_clip[size_t(b)], positives[size_t(b)],
                             ps.get("loss/log_tau"));
      else
        c = loss_contrastive(out.audio_clip[size_t(b)], out.z_voc_clip[size_t(b)], positives[size_t(b)],
                             double(lw.tau));
      pix_voc = b ? add(pix_voc, pv) : pv;
      pix_aud = b ? add(pix_aud, pa) : pa;
      cl = b ? add(cl, c) : c;
    }
    pix_voc = scale(pix_voc, 1.0 / B);
    pix_aud = scale(pix_aud, 1.0 / B);
    cl = scale(cl, 1.0 / B);
    auto cov = loss_cov(out.z_id_all, out.z_amb_all, out.z_voc_all);
    return total_loss(pix_voc, pix_aud, cl, cov, lw).total;
  };

  ParamStore<double> params;
  init_params(params, mc, cfg.seed);
  if (lw.learnable_tau) params.create("loss/log_tau", TensorD::full({1}, std::log(lw.tau)));
  return grad_check(fn, params, opt);
}

std::string grad_check_table(const GradCheckReport& report) {
  std::ostringstream ss;
  ss << "parameter                                coords   max rel err\n";
  for (const auto& row : report.rows) {
    ss << "  ";
    ss.width(40);
    ss.setf(std::ios::left);
    ss << row.param;
    ss.unsetf(std::ios::left);
    ss.width(5);
    ss << row.coords_checked << "   " << row.max_rel_err << "\n";
  }
  ss << (report.pass ? "PASS" : "FAIL") << ": max rel err " << report.max_rel_err << " (tol " << report.tol
     << ") worst at " << report.worst_param << "\n";
  return ss.str();
}

}  // namespace synclip
