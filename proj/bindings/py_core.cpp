#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "synclip/checkpoint.hpp"
#include "synclip/evalsync.hpp"
#include "synclip/trainer.hpp"
#include "synclip/verify.hpp"

namespace py = pybind11;
using namespace synclip;

namespace {

py::array_t<float> to_array(const TensorF& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<float> out(shape);
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

TensorF from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(int(a.shape(i)));
  TensorF t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

TrainConfig config_from_dict(const py::dict& d) {
  TrainConfig cfg;
  for (auto item : d)
    config_set(cfg, py::str(item.first).cast<std::string>(), py::str(item.second).cast<std::string>());
  return cfg;
}

CorpusConfig corpus_config(int T, double noise, int lag_max) {
  CorpusConfig cc;
  cc.T = T;
  cc.noise_level = float(noise);
  cc.lag_max = lag_max;
  return cc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "synclip core: synthetic audio-visual pretraining and sync evaluation";

  py::register_exception<Error>(m, "SynclipError");

  m.def(
      "gen_corpus",
      [](uint64_t seed, int identities, int clips_per_id, int T, double noise, int lag_max) {
        const CorpusConfig cc = corpus_config(T, noise, lag_max);
        auto corpus = gen_corpus(seed, identities, clips_per_id, T, cc);
        py::list out;
        for (const auto& clip : corpus) {
          py::dict d;
          d["frames"] = to_array(clip.frames);
          py::array_t<float> wave(py::ssize_t(clip.wave.size()));
          std::copy(clip.wave.begin(), clip.wave.end(), wave.mutable_data());
          d["wave"] = wave;
          d["identity_id"] = clip.identity.identity_id;
          d["split"] = clip.split;
          d["true_lag"] = clip.true_lag;
          d["mouth_drive"] = clip.tracks.mouth_drive;
          d["blink"] = std::vector<int>(clip.tracks.blink.begin(), clip.tracks.blink.end());
          out.append(d);
        }
        return out;
      },
      py::arg("seed"), py::arg("identities"), py::arg("clips_per_id"), py::arg("T") = 16,
      py::arg("noise") = 0.01, py::arg("lag_max") = 5);

  m.def(
      "gen_data",
      [](const std::string& out_dir, uint64_t seed, int identities, int clips_per_id, int T, double noise,
         int lag_max) {
        const CorpusConfig cc = corpus_config(T, noise, lag_max);
        auto corpus = gen_corpus(seed, identities, clips_per_id, T, cc);
        save_corpus(corpus, CorpusMeta{seed, identities, clips_per_id, T}, out_dir, cc);
        return int(corpus.size());
      },
      py::arg("out_dir"), py::arg("seed"), py::arg("identities"), py::arg("clips_per_id"),
      py::arg("T") = 16, py::arg("noise") = 0.01, py::arg("lag_max") = 5);

  m.def(
      "audio_featurize",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& wave, int T) {
        CorpusConfig cc;
        cc.T = T;
        std::vector<float> w(wave.data(), wave.data() + wave.size());
        return to_array(audio_featurize(w, T, cc.L, cc).concat);
      },
      py::arg("wave"), py::arg("T"));

  m.def(
      "inject_lag",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& wave, int delta, int T,
         int lag_max) {
        CorpusConfig cc;
        cc.T = T;
        cc.lag_max = lag_max;
        Clip clip;
        clip.frames = TensorF({T, cc.C, cc.H, cc.W});
        clip.wave.assign(wave.data(), wave.data() + wave.size());
        auto lagged = inject_lag(clip, delta, cc);
        py::array_t<float> out(py::ssize_t(lagged.wave.size()));
        std::copy(lagged.wave.begin(), lagged.wave.end(), out.mutable_data());
        return out;
      },
      py::arg("wave"), py::arg("delta"), py::arg("T") = 16, py::arg("lag_max") = 5);

  m.def(
      "sample_uniform_mask",
      [](int n_patches, double ratio, uint64_t seed) {
        Rng rng(seed);
        auto plan = sample_uniform_mask(n_patches, ratio, rng);
        return py::make_tuple(plan.visible, plan.masked);
      },
      py::arg("n_patches"), py::arg("ratio"), py::arg("seed"));

  m.def(
      "sample_face_mask",
      [](int n_patches, double ratio, const std::vector<double>& weights, uint64_t seed) {
        Rng rng(seed);
        FaceWeights w;
        w.w = weights;
        auto plan = sample_face_mask(n_patches, ratio, w, rng);
        return py::make_tuple(plan.visible, plan.masked);
      },
      py::arg("n_patches"), py::arg("ratio"), py::arg("weights"), py::arg("seed"));

  m.def(
      "similarity_matrix",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& A,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& V) {
        auto result = similarity_matrix(from_array(A), from_array(V));
        return py::make_tuple(to_array(result.sim), result.had_zero_rows);
      },
      py::arg("audio_tokens"), py::arg("video_tokens"));

  m.def(
      "estimate_lag",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& sim, int lag_max) {
        auto est = estimate_lag(lag_curve(from_array(sim), lag_max));
        return py::make_tuple(est.lag, est.in_sync_score);
      },
      py::arg("sim"), py::arg("lag_max"));

  m.def(
      "acc_offset",
      [](const std::vector<int>& predicted, const std::vector<int>& truth, int K) {
        auto ao = acc_offset(predicted, truth, K);
        return py::make_tuple(ao.acc_percent, ao.mean_offset);
      },
      py::arg("predicted"), py::arg("truth"), py::arg("K"));

  m.def(
      "wer",
      [](const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
        auto r = wer(hyp, ref);
        py::dict d;
        d["wer"] = r.wer;
        d["substitutions"] = r.substitutions;
        d["deletions"] = r.deletions;
        d["insertions"] = r.insertions;
        return d;
      },
      py::arg("hyp"), py::arg("ref"));

  m.def(
      "sync_conf",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& A,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& V, int window, int L) {
        auto sc = sync_conf(from_array(A), from_array(V), window, L);
        return py::make_tuple(sc.conf, sc.mean);
      },
      py::arg("audio_tokens"), py::arg("video_tokens"), py::arg("window") = 5, py::arg("L") = 5);

  m.def(
      "train",
      [](const py::dict& config) {
        TrainConfig cfg = config_from_dict(config);
        cfg.validate();
        auto r = train(cfg);
        py::dict d;
        d["checkpoint"] = r.final_checkpoint.string();
        d["metrics_log"] = r.metrics_log.string();
        d["steps"] = r.steps_done;
        d["total"] = r.last_report.total;
        d["contrastive"] = r.last_report.contrastive;
        d["pix_voc"] = r.last_report.pix_voc;
        d["pix_aud"] = r.last_report.pix_aud;
        d["cov"] = r.last_report.cov;
        return d;
      },
      py::arg("config"));

  m.def(
      "evaluate",
      [](const std::string& ckpt, const std::string& data_dir, const std::string& protocol,
         const std::string& split, int pool_size, int sync_window, uint64_t seed) {
        EvalOptions opt;
        opt.protocol = protocol;
        opt.split = split;
        opt.pool_size = pool_size;
        opt.sync_window = sync_window;
        opt.seed = seed;
        auto rep = eval_corpus(ckpt, data_dir, opt);
        py::dict d;
        if (!rep.acc.empty()) {
          py::dict acc;
          for (size_t i = 0; i < rep.acc_K.size(); ++i)
            acc[py::int_(rep.acc_K[i])] = rep.acc[i];
          d["acc"] = acc;
          d["offset"] = rep.offset[0];
        }
        if (!rep.r_precision.empty()) d["r_precision"] = rep.r_precision;
        if (rep.probe_accuracy >= 0) d["probe_accuracy"] = rep.probe_accuracy;
        d["sync_conf"] = rep.sync_conf_mean;
        d["sync_conf_shuffled"] = rep.sync_conf_shuffled;
        d["table"] = report_table(rep);
        return d;
      },
      py::arg("checkpoint"), py::arg("data_dir"), py::arg("protocol") = "all", py::arg("split") = "test",
      py::arg("pool_size") = 32, py::arg("sync_window") = 5, py::arg("seed") = 99);

  m.def(
      "grad_check",
      [](const py::dict& config, double h, double tol, int coords) {
        TrainConfig cfg = config_from_dict(config);
        GradCheckOptions opt;
        opt.h = h;
        opt.tol = tol;
        opt.max_coords = coords;
        auto r = full_loss_grad_check(cfg, opt);
        py::dict d;
        d["pass"] = r.pass;
        d["max_rel_err"] = r.max_rel_err;
        d["worst_param"] = r.worst_param;
        return d;
      },
      py::arg("config") = py::dict(), py::arg("h") = 1e-5, py::arg("tol") = 1e-4, py::arg("coords") = 128);

  m.def("inspect_checkpoint", [](const std::string& dir) { return read_manifest_text(dir); },
        py::arg("checkpoint"));
}
