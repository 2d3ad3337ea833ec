#include "synclip/evalsync.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "synclip/checkpoint.hpp"
#include "synclip/model.hpp"

namespace synclip {

SimilarityResult similarity_matrix(const TensorF& audio_tokens, const TensorF& video_tokens) {
  const int T = audio_tokens.rows(), D = audio_tokens.cols();
  check_contract(video_tokens.rows() == T && video_tokens.cols() == D, "similarity_matrix: shape mismatch");
  for (float v : audio_tokens.data) check_contract(std::isfinite(v), "similarity_matrix: non-finite input");
  for (float v : video_tokens.data) check_contract(std::isfinite(v), "similarity_matrix: non-finite input");

  auto norms = [&](const TensorF& M) {
    std::vector<double> out(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
      double ss = 0;
      for (int j = 0; j < D; ++j) ss += double(M(t, j)) * M(t, j);
      out[size_t(t)] = std::sqrt(ss);
    }
    return out;
  };
  const auto na = norms(audio_tokens), nv = norms(video_tokens);

  SimilarityResult result;
  result.sim = TensorF({T, T});
  for (int t = 0; t < T; ++t)
    for (int s = 0; s < T; ++s) {
      if (na[size_t(t)] == 0 || nv[size_t(s)] == 0) {
        result.sim(t, s) = 0;
        result.had_zero_rows = true;
        continue;
      }
      double dot = 0;
      for (int j = 0; j < D; ++j) dot += double(audio_tokens(t, j)) * video_tokens(s, j);
      result.sim(t, s) = float(dot / (na[size_t(t)] * nv[size_t(s)]));
    }
  return result;
}

LagCurve lag_curve(const TensorF& sim, int lag_max) {
  const int T = sim.rows();
  check_contract(sim.cols() == T, "lag_curve: similarity matrix must be square");
  check_contract(lag_max >= 0 && lag_max < T, "lag_curve: lag_max must be smaller than T");
  LagCurve curve;
  for (int delta = -lag_max; delta <= lag_max; ++delta) {
    double acc = 0;
    const int lo = std::max(0, -delta);
    const int hi = std::min(T, T - delta);  // t + delta in [0, T)
    for (int t = lo; t < hi; ++t) acc += sim(t, t + delta);
    curve.offsets.push_back(delta);
    curve.scores.push_back(acc / (T - std::abs(delta)));
  }
  return curve;
}

LagEstimate estimate_lag(const LagCurve& curve) {
  check_contract(!curve.offsets.empty(), "estimate_lag: empty curve");
  LagEstimate best;
  bool first = true;
  for (size_t i = 0; i < curve.offsets.size(); ++i) {
    const int delta = curve.offsets[i];
    const double score = curve.scores[i];
    const bool wins =
        first || score > best.in_sync_score ||
        (score == best.in_sync_score &&
         (std::abs(delta) < std::abs(best.lag) || (std::abs(delta) == std::abs(best.lag) && delta < best.lag)));
    if (wins) {
      best.lag = delta;
      best.in_sync_score = score;
      first = false;
    }
  }
  // report S(0) as the in-sync score
  for (size_t i = 0; i < curve.offsets.size(); ++i)
    if (curve.offsets[i] == 0) best.in_sync_score = curve.scores[i];
  return best;
}

AccOffset acc_offset(const std::vector<int>& predicted, const std::vector<int>& truth, int K) {
  check_contract(!predicted.empty(), "acc_offset: empty input");
  check_contract(predicted.size() == truth.size(), "acc_offset: length mismatch");
  AccOffset out;
  int hits = 0;
  double err = 0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const int e = std::abs(predicted[i] - truth[i]);
    hits += e <= K;
    err += e;
  }
  out.acc_percent = 100.0 * hits / double(predicted.size());
  out.mean_offset = err / double(predicted.size());
  return out;
}

int retrieval_rank(const std::vector<float>& anchor, const std::vector<std::vector<float>>& candidates,
                   int true_index) {
  check_contract(true_index >= 0 && true_index < int(candidates.size()), "retrieval_rank: bad true index");
  auto cosine = [&](const std::vector<float>& v) {
    double dot = 0, na = 0, nv = 0;
    for (size_t j = 0; j < anchor.size(); ++j) {
      dot += double(anchor[j]) * v[j];
      na += double(anchor[j]) * anchor[j];
      nv += double(v[j]) * v[j];
    }
    const double denom = std::sqrt(na) * std::sqrt(nv);
    return denom > 0 ? dot / denom : 0.0;
  };
  const double true_score = cosine(candidates[size_t(true_index)]);
  int rank = 1;
  for (int i = 0; i < int(candidates.size()); ++i) {
    if (i == true_index) continue;
    const double s = cosine(candidates[size_t(i)]);
    if (s > true_score || (s == true_score && i < true_index)) ++rank;
  }
  return rank;
}

SyncConf sync_conf(const TensorF& audio_tokens, const TensorF& video_tokens, int window, int L) {
  const int T = audio_tokens.rows(), D = audio_tokens.cols();
  check_contract(video_tokens.rows() == T && video_tokens.cols() == D, "sync_conf: shape mismatch");
  if (T < window + 2 * L)
    throw Error(ErrorKind::contract, "sync_conf: clip too short (need T >= w + 2L = " +
                                         std::to_string(window + 2 * L) + ", have " + std::to_string(T) + ")");

  auto pooled = [&](const TensorF& M, int start) {
    std::vector<double> v(static_cast<size_t>(D), 0.0);
    for (int t = start; t < start + window; ++t)
      for (int j = 0; j < D; ++j) v[size_t(j)] += M(t, j);
    for (auto& x : v) x /= window;
    return v;
  };

  SyncConf out;
  for (int t = L; t + window + L <= T; ++t) {
    const auto a = pooled(audio_tokens, t);
    std::vector<double> dist;
    for (int delta = -L; delta <= L; ++delta) {
      const auto v = pooled(video_tokens, t + delta);
      double ss = 0;
      for (int j = 0; j < D; ++j) ss += (a[size_t(j)] - v[size_t(j)]) * (a[size_t(j)] - v[size_t(j)]);
      dist.push_back(std::sqrt(ss));
    }
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double minimum = sorted.front();
    out.conf.push_back(median - minimum);
  }
  for (double c : out.conf) out.mean += c;
  out.mean /= double(out.conf.size());
  return out;
}

WerResult wer(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  check_contract(!ref.empty(), "wer: empty reference");
  const int R = int(ref.size()), H = int(hyp.size());
  std::vector<std::vector<int>> d(static_cast<size_t>(R + 1), std::vector<int>(static_cast<size_t>(H + 1)));
  for (int i = 0; i <= R; ++i) d[size_t(i)][0] = i;
  for (int j = 0; j <= H; ++j) d[0][size_t(j)] = j;
  for (int i = 1; i <= R; ++i)
    for (int j = 1; j <= H; ++j) {
      const int sub = d[size_t(i - 1)][size_t(j - 1)] + (ref[size_t(i - 1)] != hyp[size_t(j - 1)] ? 1 : 0);
      const int del = d[size_t(i - 1)][size_t(j)] + 1;
      const int ins = d[size_t(i)][size_t(j - 1)] + 1;
      d[size_t(i)][size_t(j)] = std::min({sub, del, ins});
    }

  WerResult out;
  int i = R, j = H;
  while (i > 0 || j > 0) {
    const int cur = d[size_t(i)][size_t(j)];
    if (i > 0 && j > 0) {
      const bool match = ref[size_t(i - 1)] == hyp[size_t(j - 1)];
      if (cur == d[size_t(i - 1)][size_t(j - 1)] + (match ? 0 : 1)) {  // substitution preferred
        out.substitutions += match ? 0 : 1;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && cur == d[size_t(i - 1)][size_t(j)] + 1) {  // then deletion
      ++out.deletions;
      --i;
      continue;
    }
    ++out.insertions;
    --j;
  }
  out.wer = double(out.substitutions + out.deletions + out.insertions) / double(R);
  return out;
}

// --- probe -------------------------------------------------------------------

double probe_fit_eval(const std::vector<TensorF>& clip_features, const std::vector<int>& labels,
                      const std::vector<int>& is_train, int n_classes, uint64_t seed) {
  check_contract(clip_features.size() == labels.size() && labels.size() == is_train.size(),
                 "probe: input length mismatch");
  check_contract(n_classes >= 2, "probe: need at least 2 classes");
  const int D = clip_features.at(0).cols();

  // video-level mean features; the head is linear, so the mean of frame
  // logits equals the logit of the mean feature
  std::vector<std::vector<double>> mean_feats;
  for (const auto& f : clip_features) {
    std::vector<double> u(static_cast<size_t>(D), 0.0);
    for (int t = 0; t < f.rows(); ++t)
      for (int j = 0; j < D; ++j) u[size_t(j)] += f(t, j);
    for (auto& x : u) x /= f.rows();
    mean_feats.push_back(std::move(u));
  }

  std::vector<int> train_idx, test_idx;
  for (size_t i = 0; i < labels.size(); ++i) (is_train[i] ? train_idx : test_idx).push_back(int(i));
  check_contract(!train_idx.empty() && !test_idx.empty(), "probe: empty split");
  std::set<int> train_classes;
  for (int i : train_idx) train_classes.insert(labels[size_t(i)]);
  if (train_classes.size() < 2)
    throw Error(ErrorKind::contract, "probe: train split contains a single class");

  // plain gradient descent on softmax cross-entropy
  std::vector<double> W(static_cast<size_t>(D) * n_classes, 0.0);
  std::vector<double> bias(static_cast<size_t>(n_classes), 0.0);
  Rng rng(seed);
  for (auto& w : W) w = rng.normal() * 0.01;
  const double lr = 0.5;
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<double> gW(W.size(), 0.0), gb(bias.size(), 0.0);
    for (int i : train_idx) {
      const auto& u = mean_feats[size_t(i)];
      std::vector<double> logits(static_cast<size_t>(n_classes));
      for (int c = 0; c < n_classes; ++c) {
        double acc = bias[size_t(c)];
        for (int j = 0; j < D; ++j) acc += u[size_t(j)] * W[size_t(j) * n_classes + c];
        logits[size_t(c)] = acc;
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double Z = 0;
      for (auto& l : logits) {
        l = std::exp(l - mx);
        Z += l;
      }
      for (int c = 0; c < n_classes; ++c) {
        const double p = logits[size_t(c)] / Z;
        const double g = p - (labels[size_t(i)] == c ? 1.0 : 0.0);
        gb[size_t(c)] += g;
        for (int j = 0; j < D; ++j) gW[size_t(j) * n_classes + c] += g * u[size_t(j)];
      }
    }
    const double inv = 1.0 / double(train_idx.size());
    for (size_t k = 0; k < W.size(); ++k) W[k] -= lr * inv * gW[k];
    for (size_t k = 0; k < bias.size(); ++k) bias[k] -= lr * inv * gb[k];
  }

  int correct = 0;
  for (int i : test_idx) {
    const auto& u = mean_feats[size_t(i)];
    int arg = 0;
    double best = -1e300;
    for (int c = 0; c < n_classes; ++c) {
      double acc = bias[size_t(c)];
      for (int j = 0; j < D; ++j) acc += u[size_t(j)] * W[size_t(j) * n_classes + c];
      if (acc > best) {
        best = acc;
        arg = c;
      }
    }
    correct += arg == labels[size_t(i)];
  }
  return double(correct) / double(test_idx.size());
}

// --- driver -----------------------------------------------------------------

namespace {

std::vector<TensorF> clip_frame_patches(const Clip& clip, const CorpusConfig& cc) {
  std::vector<TensorF> patches;
  const int T = clip.frames.shape[0];
  for (int t = 0; t < T; ++t) {
    TensorF frame({cc.C, cc.H, cc.W});
    std::copy_n(clip.frames.data.begin() + int64_t(t) * cc.C * cc.H * cc.W, int64_t(cc.C) * cc.H * cc.W,
                frame.data.begin());
    patches.push_back(patchify(frame, cc.patch));
  }
  return patches;
}

}  // namespace

EvalReport eval_corpus_inmemory(const TrainConfig& cfg, const std::filesystem::path& ckpt_dir,
                                const std::vector<Clip>& corpus, const EvalOptions& opt) {
  const CorpusConfig cc = to_corpus_config(cfg);
  const ModelConfig mc = to_model_config(cfg);
  ParamStore<float> params;
  init_params(params, mc, cfg.seed);
  if (cfg.loss.learnable_tau) params.create("loss/log_tau", TensorF::full({1}, float(std::log(cfg.loss.tau))));
  Adam<float> opt_state;
  Checkpoint ck = load_checkpoint(ckpt_dir);
  restore_checkpoint(ck, params, opt_state);

  std::vector<int> eval_idx;
  for (size_t i = 0; i < corpus.size(); ++i)
    if (opt.split == "all" || corpus[i].split == opt.split) eval_idx.push_back(int(i));
  if (eval_idx.empty()) throw Error(ErrorKind::config, "no clips in split '" + opt.split + "'");

  // frozen per-clip video tokens (frames are lag-invariant)
  std::map<int, ClipTokens<float>> tokens;
  for (int i : eval_idx) {
    const Clip& clip = corpus[size_t(i)];
    auto feats = audio_featurize(clip.wave, clip.frames.shape[0], cc.L, cc);
    tokens[i] = extract_tokens(params, mc, clip_frame_patches(clip, cc), feats.concat);
  }

  EvalReport report;
  report.pool_size = opt.pool_size;
  const bool want_lag = opt.protocol == "lag" || opt.protocol == "all";
  const bool want_retrieval = opt.protocol == "retrieval" || opt.protocol == "all";
  const bool want_sync = opt.protocol == "sync_conf" || opt.protocol == "all";
  const bool want_probe = opt.protocol == "probe" || opt.protocol == "all";

  if (want_lag) {
    std::vector<int> preds, truths;
    for (int i : eval_idx) {
      const Clip& clip = corpus[size_t(i)];
      for (int delta = -cc.lag_max; delta <= cc.lag_max; ++delta) {
        Clip lagged = inject_lag(clip, delta, cc);
        auto feats = audio_featurize(lagged.wave, lagged.frames.shape[0], cc.L, cc);
        auto audio =
            audio_adapt(params, mc, Value<float>::constant(feats.concat.cast<float>())).tensor();
        auto sim = similarity_matrix(audio, tokens.at(i).z_voc);
        auto curve = lag_curve(sim.sim, cc.lag_max);
        auto est = estimate_lag(curve);
        report.lag_rows.push_back({i, delta, est.lag, est.in_sync_score});
        preds.push_back(est.lag);
        truths.push_back(delta);
      }
    }
    for (int K : report.acc_K) {
      auto ao = acc_offset(preds, truths, K);
      report.acc.push_back(ao.acc_percent);
      report.offset.push_back(ao.mean_offset);
    }
  }

  if (want_retrieval) {
    Rng rng(opt.seed);
    std::vector<int> hits(4, 0);
    int anchors = 0;
    for (int i : eval_idx) {
      const int T = corpus[size_t(i)].frames.shape[0];
      // pool sources: frames of the other evaluated clips
      std::vector<std::pair<int, int>> others;
      for (int j : eval_idx)
        if (j != i)
          for (int t = 0; t < corpus[size_t(j)].frames.shape[0]; ++t) others.push_back({j, t});
      if (int(others.size()) < opt.pool_size - 1)
        throw Error(ErrorKind::contract, "retrieval: candidate pool smaller than pool_size");
      for (int t = 0; t < T; ++t) {
        const auto& A = tokens.at(i).audio;
        std::vector<float> anchor(A.data.begin() + int64_t(t) * A.cols(),
                                  A.data.begin() + int64_t(t + 1) * A.cols());
        std::vector<std::vector<float>> cands;
        const auto& V = tokens.at(i).z_voc;
        cands.emplace_back(V.data.begin() + int64_t(t) * V.cols(), V.data.begin() + int64_t(t + 1) * V.cols());
        for (int n = 0; n < opt.pool_size - 1; ++n) {
          const auto [j, s] = others[size_t(rng.uniform_int(int(others.size())))];
          const auto& Vj = tokens.at(j).z_voc;
          cands.emplace_back(Vj.data.begin() + int64_t(s) * Vj.cols(),
                             Vj.data.begin() + int64_t(s + 1) * Vj.cols());
        }
        const int rank = retrieval_rank(anchor, cands, 0);
        for (int k = 1; k <= 3; ++k) hits[size_t(k)] += rank <= k;
        ++anchors;
      }
    }
    for (int k = 1; k <= 3; ++k) report.r_precision.push_back(double(hits[size_t(k)]) / anchors);
  }

  if (want_sync) {
    Rng rng(opt.seed ^ 0x5ca1ab1e);
    double aligned = 0, shuffled = 0;
    for (int i : eval_idx) {
      const auto& tk = tokens.at(i);
      auto sc = sync_conf(tk.audio, tk.z_voc, opt.sync_window, cc.lag_max);
      aligned += sc.mean;
      TensorF perm = tk.z_voc;
      std::vector<int> order(static_cast<size_t>(perm.rows()));
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order);
      for (int t = 0; t < perm.rows(); ++t)
        for (int j = 0; j < perm.cols(); ++j) perm(t, j) = tk.z_voc(order[size_t(t)], j);
      shuffled += sync_conf(tk.audio, perm, opt.sync_window, cc.lag_max).mean;
    }
    report.sync_conf_mean = aligned / double(eval_idx.size());
    report.sync_conf_shuffled = shuffled / double(eval_idx.size());
  }

  if (want_probe) {
    // labels from ground truth; threshold at the train-split median
    std::vector<TensorF> feats;
    std::vector<double> stat;
    std::vector<int> is_train;
    std::vector<int> probe_idx;
    for (size_t i = 0; i < corpus.size(); ++i) {
      const Clip& clip = corpus[i];
      if (clip.split != "train" && clip.split != opt.split) continue;
      probe_idx.push_back(int(i));
      is_train.push_back(clip.split == "train");
      auto f = audio_featurize(clip.wave, clip.frames.shape[0], cc.L, cc);
      auto tk = tokens.count(int(i)) ? tokens.at(int(i))
                                     : extract_tokens(params, mc, clip_frame_patches(clip, cc), f.concat);
      TensorF u({tk.z_voc.rows(), tk.z_voc.cols()});
      for (size_t n = 0; n < u.data.size(); ++n) u.data[n] = 0.5f * (tk.z_voc.data[n] + tk.z_amb.data[n]);
      feats.push_back(std::move(u));
      double s = 0;
      if (opt.probe_labels == "blink_rate") {
        for (uint8_t b : clip.tracks.blink) s += b;
        s /= double(clip.tracks.blink.size());
      } else {
        for (float m : clip.tracks.mouth_drive) s += m;
        s /= double(clip.tracks.mouth_drive.size());
      }
      stat.push_back(s);
    }
    std::vector<double> train_stats;
    for (size_t n = 0; n < stat.size(); ++n)
      if (is_train[n]) train_stats.push_back(stat[n]);
    std::sort(train_stats.begin(), train_stats.end());
    const double median = train_stats[train_stats.size() / 2];
    std::vector<int> labels;
    for (double s : stat) labels.push_back(s >= median ? 1 : 0);
    report.probe_accuracy = probe_fit_eval(feats, labels, is_train, 2, opt.seed);
    report.probe_labels = opt.probe_labels;
  }

  return report;
}

EvalReport eval_corpus(const std::filesystem::path& ckpt_dir, const std::filesystem::path& data_dir,
                       const EvalOptions& opt) {
  Checkpoint ck = load_checkpoint(ckpt_dir);
  TrainConfig cfg = config_from_checkpoint(ck);
  const CorpusConfig cc = to_corpus_config(cfg);
  auto corpus = load_corpus(data_dir, cc);
  return eval_corpus_inmemory(cfg, ckpt_dir, corpus, opt);
}

std::string report_json(const EvalReport& report) {
  std::string out;
  for (const auto& row : report.lag_rows) {
    nlohmann::json j{{"record", "clip_lag"},
                     {"clip", row.clip_index},
                     {"true_lag", row.true_lag},
                     {"predicted_lag", row.predicted_lag},
                     {"in_sync_score", row.in_sync_score}};
    out += j.dump() + "\n";
  }
  nlohmann::json summary{{"record", "summary"}};
  if (!report.acc.empty()) {
    for (size_t i = 0; i < report.acc_K.size(); ++i) {
      summary["acc_pm" + std::to_string(report.acc_K[i])] = report.acc[i];
      summary["offset"] = report.offset[i];
    }
  }
  if (!report.r_precision.empty()) {
    summary["pool_size"] = report.pool_size;
    for (size_t k = 0; k < report.r_precision.size(); ++k)
      summary["r_precision_top" + std::to_string(k + 1)] = report.r_precision[k];
  }
  if (report.sync_conf_mean != 0 || report.sync_conf_shuffled != 0) {
    summary["sync_conf"] = report.sync_conf_mean;
    summary["sync_conf_shuffled"] = report.sync_conf_shuffled;
  }
  if (report.probe_accuracy >= 0) {
    summary["probe_accuracy"] = report.probe_accuracy;
    summary["probe_labels"] = report.probe_labels;
  }
  out += summary.dump() + "\n";
  return out;
}

std::string report_table(const EvalReport& report) {
  std::ostringstream ss;
  ss << std::fixed;
  ss.precision(2);
  if (!report.acc.empty()) {
    ss << "              ";
    for (int K : report.acc_K) ss << "| K = " << K << "            ";
    ss << "\n              ";
    for (size_t i = 0; i < report.acc_K.size(); ++i) ss << "| Acc%   Offset   ";
    ss << "\n  lag sweep   ";
    for (size_t i = 0; i < report.acc.size(); ++i) {
      ss << "| ";
      ss.width(6);
      ss << report.acc[i] << " ";
      ss.width(6);
      ss << report.offset[i] << "   ";
    }
    ss << "\n";
  }
  if (!report.r_precision.empty()) {
    ss << "  R-precision (" << report.pool_size << "): ";
    for (size_t k = 0; k < report.r_precision.size(); ++k) {
      ss << "Top" << (k + 1) << " ";
      ss.precision(4);
      ss << report.r_precision[k];
      ss.precision(2);
      ss << (k + 1 < report.r_precision.size() ? "  " : "");
    }
    ss << "\n";
  }
  if (report.sync_conf_mean != 0 || report.sync_conf_shuffled != 0) {
    ss.precision(4);
    ss << "  Sync_conf: aligned " << report.sync_conf_mean << "  shuffled " << report.sync_conf_shuffled << "\n";
    ss.precision(2);
  }
  if (report.probe_accuracy >= 0) {
    ss.precision(4);
    ss << "  probe (" << report.probe_labels << "): accuracy " << report.probe_accuracy << "\n";
  }
  return ss.str();
}

}  // namespace synclip
