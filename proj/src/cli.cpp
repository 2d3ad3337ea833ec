#include "synclip/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "synclip/checkpoint.hpp"
#include "synclip/evalsync.hpp"
#include "synclip/trainer.hpp"
#include "synclip/verify.hpp"

namespace synclip {

namespace {

void apply_env_seed(TrainConfig& cfg) {
  if (const char* env = std::getenv("SYNCLIP_SEED")) {
    config_set(cfg, "seed", env);
    std::cerr << "seed overridden by SYNCLIP_SEED=" << env << "\n";
  }
}

struct VariantScore {
  std::string name;
  std::vector<double> acc;
  double offset = 0;
  double r1 = 0;
};

std::string ablation_table(const std::vector<VariantScore>& rows) {
  std::ostringstream ss;
  ss << std::fixed;
  ss.precision(2);
  ss << "variant        Acc+-1   Acc+-5   Acc+-15  Offset   R@1\n";
  for (const auto& r : rows) {
    ss << "  ";
    ss.width(12);
    ss.setf(std::ios::left);
    ss << r.name;
    ss.unsetf(std::ios::left);
    for (double a : r.acc) {
      ss.width(7);
      ss << a << "  ";
    }
    ss.width(7);
    ss << r.offset << "  ";
    ss.precision(4);
    ss.width(6);
    ss << r.r1;
    ss.precision(2);
    ss << "\n";
  }
  return ss.str();
}

int run_parsed(CLI::App& app) {
  // --- gen-data ---------------------------------------------------------
  if (auto* gen = app.get_subcommand("gen-data"); gen && gen->parsed()) {
    const uint64_t seed = gen->get_option("--seed")->as<uint64_t>();
    const int identities = gen->get_option("--identities")->as<int>();
    const int clips = gen->get_option("--clips-per-id")->as<int>();
    const int T = gen->get_option("--T")->as<int>();
    const std::string out = gen->get_option("--out")->as<std::string>();
    CorpusConfig cc;
    cc.T = T;
    cc.noise_level = gen->get_option("--noise")->as<float>();
    cc.lag_max = gen->get_option("--lag-max")->as<int>();
    auto corpus = gen_corpus(seed, identities, clips, T, cc);
    save_corpus(corpus, CorpusMeta{seed, identities, clips, T}, out, cc);
    std::cout << "wrote " << corpus.size() << " clips to " << out << "\n";
    return 0;
  }

  // --- pretrain ---------------------------------------------------------
  if (auto* pre = app.get_subcommand("pretrain"); pre && pre->parsed()) {
    TrainConfig cfg;
    const std::string config_path = pre->get_option("--config")->as<std::string>();
    if (!config_path.empty()) cfg = load_config_file(config_path);
    if (pre->get_option("--set")->count())
      for (const auto& kv : pre->get_option("--set")->as<std::vector<std::string>>())
        apply_config_line(cfg, kv);
    if (pre->get_option("--steps")->count()) cfg.steps = pre->get_option("--steps")->as<int>();
    if (pre->get_option("--seed")->count()) cfg.seed = pre->get_option("--seed")->as<uint64_t>();
    if (pre->get_option("--out")->count()) cfg.out_dir = pre->get_option("--out")->as<std::string>();
    if (pre->get_option("--data")->count()) cfg.data_dir = pre->get_option("--data")->as<std::string>();
    apply_env_seed(cfg);
    cfg.validate();
    const std::string resume_from = pre->get_option("--resume")->as<std::string>();
    TrainResult r = resume_from.empty() ? train(cfg) : train_resume(resume_from, cfg);
    std::cout << "trained " << r.steps_done << " steps; final total loss " << r.last_report.total
              << "; checkpoint " << r.final_checkpoint.string() << "\n";
    return 0;
  }

  // --- eval-sync / probe --------------------------------------------------
  auto run_eval = [&](CLI::App* sub, const std::string& default_protocol) {
    EvalOptions opt;
    opt.protocol = default_protocol;
    const std::string ckpt = sub->get_option("--ckpt")->as<std::string>();
    const std::string data = sub->get_option("--data")->as<std::string>();
    if (sub->get_option_no_throw("--protocol") && sub->get_option("--protocol")->count())
      opt.protocol = sub->get_option("--protocol")->as<std::string>();
    if (sub->get_option_no_throw("--labels") && sub->get_option("--labels")->count())
      opt.probe_labels = sub->get_option("--labels")->as<std::string>();
    opt.split = sub->get_option("--split")->as<std::string>();
    opt.seed = sub->get_option("--seed")->as<uint64_t>();
    if (sub->get_option_no_throw("--pool") && sub->get_option("--pool")->count())
      opt.pool_size = sub->get_option("--pool")->as<int>();
    if (sub->get_option_no_throw("--sync-window")) opt.sync_window = sub->get_option("--sync-window")->as<int>();
    auto report = eval_corpus(ckpt, data, opt);
    const std::string report_path = sub->get_option("--report")->as<std::string>();
    if (!report_path.empty()) {
      std::ofstream f(report_path);
      if (!f) throw_io("cannot write report: " + report_path);
      f << report_json(report);
      std::cout << "report written to " << report_path << "\n";
    } else {
      std::cout << report_json(report);
    }
    if (sub->get_option_no_throw("--table") && sub->get_option("--table")->count())
      std::cout << report_table(report);
    return 0;
  };
  if (auto* ev = app.get_subcommand("eval-sync"); ev && ev->parsed()) return run_eval(ev, "all");
  if (auto* pr = app.get_subcommand("probe"); pr && pr->parsed()) return run_eval(pr, "probe");

  // --- grad-check ---------------------------------------------------------
  if (auto* gc = app.get_subcommand("grad-check"); gc && gc->parsed()) {
    TrainConfig cfg;
    const std::string config_path = gc->get_option("--config")->as<std::string>();
    if (!config_path.empty()) cfg = load_config_file(config_path);
    apply_env_seed(cfg);
    GradCheckOptions opt;
    opt.h = gc->get_option("--fd-step")->as<double>();
    opt.tol = gc->get_option("--tol")->as<double>();
    opt.max_coords = gc->get_option("--coords")->as<int>();
    auto report = full_loss_grad_check(cfg, opt);
    std::cout << grad_check_table(report);
    if (!report.pass) throw_numeric("gradient check failed: max rel err " + std::to_string(report.max_rel_err));
    return 0;
  }

  // --- ablate --------------------------------------------------------------
  if (auto* ab = app.get_subcommand("ablate"); ab && ab->parsed()) {
    TrainConfig base;
    const std::string config_path = ab->get_option("--config")->as<std::string>();
    if (!config_path.empty()) base = load_config_file(config_path);
    if (ab->get_option("--steps")->count()) base.steps = ab->get_option("--steps")->as<int>();
    if (ab->get_option("--seed")->count()) base.seed = ab->get_option("--seed")->as<uint64_t>();
    apply_env_seed(base);
    const std::string out = ab->get_option("--out")->as<std::string>();
    std::vector<std::string> variants = {"ours", "A1", "A2", "A3", "B1", "C1"};
    if (ab->get_option("--variant")->count())
      variants = {ab->get_option("--variant")->as<std::string>()};

    std::vector<VariantScore> rows;
    for (const auto& v : variants) {
      TrainConfig cfg = base;
      apply_variant(cfg, v);
      cfg.out_dir = (std::filesystem::path(out) / v).string();
      cfg.validate();
      std::cout << "[" << v << "] training " << cfg.steps << " steps...\n" << std::flush;
      auto r = train(cfg);
      auto corpus = cfg.data_dir.empty()
                        ? gen_corpus(cfg.seed, cfg.corpus_identities, cfg.corpus_clips_per_id, cfg.corpus_T,
                                     to_corpus_config(cfg))
                        : load_corpus(cfg.data_dir, to_corpus_config(cfg));
      EvalOptions opt;
      opt.protocol = "all";
      opt.pool_size = ab->get_option("--pool")->as<int>();
      opt.sync_window = ab->get_option("--sync-window")->as<int>();
      auto rep = eval_corpus_inmemory(cfg, r.final_checkpoint, corpus, opt);
      VariantScore row;
      row.name = v;
      row.acc = rep.acc;
      row.offset = rep.offset.empty() ? 0 : rep.offset[0];
      row.r1 = rep.r_precision.empty() ? 0 : rep.r_precision[0];
      rows.push_back(row);
      std::cout << "[" << v << "] Acc+-1 " << (row.acc.empty() ? 0 : row.acc[0]) << "  R@1 " << row.r1 << "\n"
                << std::flush;
    }
    const std::string table = ablation_table(rows);
    std::cout << table;
    std::ofstream f(std::filesystem::path(out) / "ablation_table.txt");
    if (f) f << table;
    return 0;
  }

  // --- inspect-ckpt -----------------------------------------------------------
  if (auto* ins = app.get_subcommand("inspect-ckpt"); ins && ins->parsed()) {
    std::cout << read_manifest_text(ins->get_option("--ckpt")->as<std::string>());
    return 0;
  }

  std::cerr << app.help() << "\n";
  throw Error(ErrorKind::config, "no subcommand given");
}

}  // namespace

int cli_run(int argc, const char* const* argv) {
  CLI::App app{"synclip: synthetic audio-visual sync pretraining and evaluation"};
  app.require_subcommand(0, 1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus on disk");
  gen->add_option("--seed", "corpus seed")->default_val(uint64_t(7));
  gen->add_option("--identities", "number of identities")->default_val(8);
  gen->add_option("--clips-per-id", "clips per identity")->default_val(8);
  gen->add_option("--T", "frames per clip")->default_val(16);
  gen->add_option("--noise", "audio noise level")->default_val(0.01f);
  gen->add_option("--lag-max", "maximum lag magnitude supported by the corpus")->default_val(5);
  gen->add_option("--out", "output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "run the pretraining loop");
  pre->add_option("--config", "config file of key = value lines")->default_val(std::string());
  pre->add_option("--set", "override, e.g. --set \"mask.mode = uniform_only\"")->take_all();
  pre->add_option("--steps", "override step count");
  pre->add_option("--seed", "override seed");
  pre->add_option("--out", "output directory");
  pre->add_option("--data", "corpus directory (default: generate in memory)");
  pre->add_option("--resume", "checkpoint directory to continue from")->default_val(std::string());

  auto add_eval_opts = [](CLI::App* sub, bool with_protocol) {
    sub->add_option("--ckpt", "checkpoint directory")->required();
    sub->add_option("--data", "corpus directory")->required();
    if (with_protocol)
      sub->add_option("--protocol", "lag | retrieval | sync_conf | probe | all");
    else
      sub->add_option("--labels", "mouth_activity | blink_rate");
    sub->add_option("--split", "corpus split to evaluate")->default_val(std::string("test"));
    sub->add_option("--seed", "evaluation sampler seed")->default_val(uint64_t(99));
    sub->add_option("--report", "write the JSON-lines report here")->default_val(std::string());
    if (with_protocol) {
      sub->add_option("--pool", "retrieval pool size")->default_val(32);
      sub->add_option("--sync-window", "window length of the sync-confidence protocol")->default_val(5);
      sub->add_flag("--table", "also print an aligned text table");
    }
  };
  auto* ev = app.add_subcommand("eval-sync", "evaluate lag, retrieval and sync confidence");
  add_eval_opts(ev, true);
  auto* pr = app.add_subcommand("probe", "linear probe on frozen motion descriptors");
  add_eval_opts(pr, false);

  auto* gc = app.add_subcommand("grad-check", "verify gradients of the full pretraining loss");
  gc->add_option("--config", "config file")->default_val(std::string());
  gc->add_option("--fd-step", "finite-difference step")->default_val(1e-5);
  gc->add_option("--tol", "relative tolerance")->default_val(1e-4);
  gc->add_option("--coords", "coordinates to sample")->default_val(192);

  auto* ab = app.add_subcommand("ablate", "train and compare the ablation grid");
  ab->add_option("--config", "base config file")->default_val(std::string());
  ab->add_option("--variant", "run a single variant: A1|A2|A3|B1|C1|ours");
  ab->add_option("--steps", "training budget per variant");
  ab->add_option("--seed", "base seed");
  ab->add_option("--pool", "retrieval pool size for the comparison")->default_val(32);
  ab->add_option("--sync-window", "window length of the sync-confidence protocol")->default_val(5);
  ab->add_option("--out", "output directory")->required();

  auto* ins = app.add_subcommand("inspect-ckpt", "dump a checkpoint manifest");
  ins->add_option("--ckpt", "checkpoint directory")->required();

  try {
    app.parse(argc, argv);
    return run_parsed(app);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace synclip
