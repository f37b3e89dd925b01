#include "scrl/checkpoint.hpp"
#include "scrl/graph_io.hpp"
#include "scrl/train.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

#ifndef SCRL_VERSION
#define SCRL_VERSION "unknown"
#endif

namespace {

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct TrainFlags {
  std::string data;
  std::string out = "runs/latest";
  std::string from_manifest;
  int lpc = 0;  // 0: use splits.json from the dataset dir
  int val_size = 500;
  int test_size = 1000;
  int sweep_seeds = 0;
  bool no_self_loops = false;
  std::string ablation = "full";
  scrl::TrainConfig cfg;
};

void add_train_options(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--data", f.data, "dataset directory");
  cmd->add_option("--out", f.out, "run output directory");
  cmd->add_option("--from-manifest", f.from_manifest,
                  "reproduce a previous run from its manifest.json");
  cmd->add_option("--seed", f.cfg.seed, "RNG seed");
  cmd->add_option("--k", f.cfg.k, "kNN neighbor count for the feature graph");
  cmd->add_option("--tau", f.cfg.tau, "softmax temperature");
  cmd->add_option("--prototypes", f.cfg.prototypes, "prototype count B (0 = 3*classes)");
  cmd->add_option("--sinkhorn-iters", f.cfg.sinkhorn_iters, "Sinkhorn iteration count");
  cmd->add_option("--epsilon", f.cfg.epsilon, "Sinkhorn entropic regularization");
  cmd->add_option("--lr", f.cfg.learning_rate, "Adam learning rate");
  cmd->add_option("--weight-decay", f.cfg.weight_decay, "L2 weight decay");
  cmd->add_option("--dropout", f.cfg.dropout, "dropout rate");
  cmd->add_option("--epochs", f.cfg.epochs, "training epochs");
  cmd->add_option("--hidden", f.cfg.hidden, "hidden layer width");
  cmd->add_option("--embed", f.cfg.embed, "embedding width U");
  cmd->add_option("--ablation", f.ablation, "full | no-ssl | topology-only | feature-only")
      ->check(CLI::IsMember({"full", "no-ssl", "topology-only", "feature-only"}));
  cmd->add_flag("--no-self-loops", f.no_self_loops,
                "normalize the plain adjacency instead of A + I");
  cmd->add_flag("--normalize-embeddings", f.cfg.normalize_embeddings,
                "L2-normalize embeddings and prototypes before scoring");
  cmd->add_option("--eval-every", f.cfg.eval_every, "evaluation cadence in epochs");
  cmd->add_option("--lpc", f.lpc, "generate splits with this many labels per class");
  cmd->add_option("--val-size", f.val_size, "validation nodes when --lpc is used");
  cmd->add_option("--test-size", f.test_size, "test nodes when --lpc is used");
  cmd->add_option("--sweep-seeds", f.sweep_seeds, "run N seeds (seed..seed+N-1) and aggregate");
  cmd->set_config("--config", "", "config file (TOML; flags override)");
}

scrl::DatasetBundle load_for_training(const fs::path& dir, const TrainFlags& f,
                                      std::uint64_t seed) {
  if (f.lpc <= 0) return scrl::load_dataset(dir);
  const auto meta = scrl::load_meta(dir / "meta.json");
  scrl::DatasetBundle ds;
  ds.num_classes = meta.num_classes;
  ds.features = scrl::load_features(dir / "features.txt");
  ds.labels = scrl::load_labels(dir / "labels.txt", meta.num_classes);
  ds.adjacency = scrl::adjacency_from_edges(scrl::load_edges(dir / "edges.txt", meta.num_nodes),
                                            meta.num_nodes);
  scrl::Splits s =
      scrl::make_splits(ds.labels, meta.num_classes, f.lpc, f.val_size, f.test_size, seed);
  ds.train = s.train;
  ds.val = s.val;
  ds.test = s.test;
  return ds;
}

json run_one_training(const fs::path& data_dir, const TrainFlags& flags,
                      const scrl::TrainConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);

  json manifest{{"config", cfg.to_json()},
                {"dataset", data_dir.string()},
                {"version", SCRL_VERSION},
                {"started_at", timestamp_utc()},
                {"out_dir", out_dir.string()}};
  if (flags.lpc > 0) {
    manifest["lpc"] = flags.lpc;
    manifest["val_size"] = flags.val_size;
    manifest["test_size"] = flags.test_size;
  }
  {
    std::ofstream mf(out_dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
  }

  scrl::DatasetBundle ds = load_for_training(data_dir, flags, cfg.seed);

  std::ofstream metrics(out_dir / "metrics.jsonl");
  std::ofstream timings(out_dir / "timings.jsonl");
  scrl::TrainResult result =
      scrl::train(ds, cfg, [&](const scrl::EpochMetrics& em) {
        metrics << em.to_json().dump() << "\n";
        timings << json{{"epoch", em.epoch}, {"wall_ms", em.wall_ms}}.dump() << "\n";
      });
  metrics.close();
  timings.close();

  scrl::CheckpointHeader header;
  header.config = cfg;
  header.num_nodes = static_cast<int>(ds.num_nodes());
  header.num_features = static_cast<int>(ds.num_features());
  header.num_classes = ds.num_classes;
  header.version = SCRL_VERSION;
  scrl::save_checkpoint(out_dir / "model.ckpt", header, result.model.parameters());

  json summary{{"dataset", data_dir.string()},
               {"ablation", scrl::to_string(cfg.ablation)},
               {"seed", cfg.seed},
               {"epochs", cfg.epochs},
               {"selection", result.selection},
               {"best_epoch", result.best_epoch},
               {"test_acc", result.test.accuracy},
               {"test_f1", result.test.macro_f1}};
  if (!ds.val.empty()) summary["val_acc"] = result.val.accuracy;
  {
    std::ofstream sf(out_dir / "summary.json");
    sf << summary.dump(2) << "\n";
  }
  return summary;
}

int cmd_train(TrainFlags& flags) {
  if (!flags.from_manifest.empty()) {
    std::ifstream mf(flags.from_manifest);
    if (!mf) throw std::runtime_error("cannot open manifest " + flags.from_manifest);
    json manifest = json::parse(mf);
    flags.cfg = scrl::TrainConfig::from_json(manifest.at("config"));
    if (flags.data.empty()) flags.data = manifest.at("dataset").get<std::string>();
    if (manifest.contains("lpc")) {
      flags.lpc = manifest["lpc"].get<int>();
      flags.val_size = manifest.value("val_size", flags.val_size);
      flags.test_size = manifest.value("test_size", flags.test_size);
    }
  } else {
    flags.cfg.ablation = scrl::ablation_from_string(flags.ablation);
    flags.cfg.self_loops = !flags.no_self_loops;
  }
  if (flags.data.empty()) throw std::runtime_error("--data is required");
  flags.cfg.validate();

  const fs::path out_dir(flags.out);
  if (flags.sweep_seeds <= 1) {
    json summary = run_one_training(flags.data, flags, flags.cfg, out_dir);
    std::cout << summary.dump(2) << "\n";
    return 0;
  }

  std::vector<json> summaries;
  for (int s = 0; s < flags.sweep_seeds; ++s) {
    scrl::TrainConfig cfg = flags.cfg;
    cfg.seed = flags.cfg.seed + static_cast<std::uint64_t>(s);
    summaries.push_back(
        run_one_training(flags.data, flags, cfg, out_dir / ("seed_" + std::to_string(cfg.seed))));
  }
  auto mean_std = [&](const char* key) {
    double mean = 0.0;
    for (const auto& s : summaries) mean += s.at(key).get<double>();
    mean /= static_cast<double>(summaries.size());
    double var = 0.0;
    for (const auto& s : summaries) {
      const double d = s.at(key).get<double>() - mean;
      var += d * d;
    }
    var /= static_cast<double>(summaries.size());
    return std::pair<double, double>(mean, std::sqrt(var));
  };
  const auto [acc_mean, acc_std] = mean_std("test_acc");
  const auto [f1_mean, f1_std] = mean_std("test_f1");
  json aggregate{{"seeds", flags.sweep_seeds},
                 {"base_seed", flags.cfg.seed},
                 {"test_acc_mean", acc_mean},
                 {"test_acc_std", acc_std},
                 {"test_f1_mean", f1_mean},
                 {"test_f1_std", f1_std},
                 {"runs", summaries}};
  fs::create_directories(out_dir);
  {
    std::ofstream af(out_dir / "aggregate.json");
    af << aggregate.dump(2) << "\n";
  }
  std::cout << aggregate.dump(2) << "\n";
  return 0;
}

int cmd_build_knn(const std::string& data, int k, const std::string& out) {
  const fs::path dir(data);
  const auto meta = scrl::load_meta(dir / "meta.json");
  scrl::Matrix features = scrl::load_features(dir / "features.txt");
  if (features.rows() != meta.num_nodes)
    throw scrl::ValidationError("features.txt row count does not match meta.json");
  scrl::FeatureGraph g = scrl::build_knn_graph(features, k);
  std::ofstream of(out);
  if (!of) throw std::runtime_error("cannot write " + out);
  of << "# knn k=" << k << "\n";
  for (Eigen::Index i = 0; i < g.adjacency.outerSize(); ++i)
    for (scrl::CsrMatrix::InnerIterator it(g.adjacency, i); it; ++it)
      if (it.row() < it.col()) of << it.row() << " " << it.col() << "\n";
  return 0;
}

int cmd_make_splits(const std::string& data, int lpc, int val_size, int test_size,
                    std::uint64_t seed, std::string out) {
  const fs::path dir(data);
  const auto meta = scrl::load_meta(dir / "meta.json");
  const auto labels = scrl::load_labels(dir / "labels.txt", meta.num_classes);
  if (static_cast<int>(labels.size()) != meta.num_nodes)
    throw scrl::ValidationError("labels.txt line count does not match meta.json");
  scrl::Splits s = scrl::make_splits(labels, meta.num_classes, lpc, val_size, test_size, seed);
  if (out.empty()) out = (dir / "splits.json").string();
  scrl::write_splits_json(s, out);
  std::cout << "wrote " << out << " (train=" << s.train.size() << " val=" << s.val.size()
            << " test=" << s.test.size() << ")\n";
  return 0;
}

scrl::LoadedCheckpoint load_and_check(const std::string& checkpoint, const std::string& data,
                                      scrl::DatasetBundle& ds) {
  scrl::LoadedCheckpoint ckpt = scrl::load_checkpoint(checkpoint);
  ds = scrl::load_dataset(data);
  if (ckpt.header.num_features != ds.num_features() || ckpt.header.num_classes != ds.num_classes)
    throw scrl::ValidationError(
        "checkpoint was trained on " + std::to_string(ckpt.header.num_features) + " features / " +
        std::to_string(ckpt.header.num_classes) + " classes, dataset has " +
        std::to_string(ds.num_features()) + " / " + std::to_string(ds.num_classes));
  return ckpt;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data) {
  scrl::DatasetBundle ds;
  scrl::LoadedCheckpoint ckpt = load_and_check(checkpoint, data, ds);
  scrl::ScrlModel model = scrl::model_from_checkpoint(ckpt);
  scrl::PropagationOps ops = scrl::build_ops(ds, ckpt.header.config);
  scrl::EvalOutputs eval = scrl::forward_eval(model, ops, ds.features);
  const auto pred = scrl::argmax_rows(eval.predictions);
  const auto m = scrl::classification_metrics(pred, ds.labels, ds.test, ds.num_classes);
  std::cout << json{{"test_acc", m.accuracy}, {"test_f1", m.macro_f1}}.dump(2) << "\n";
  return 0;
}

int cmd_export_embeddings(const std::string& checkpoint, const std::string& data,
                          const std::string& out) {
  scrl::DatasetBundle ds;
  scrl::LoadedCheckpoint ckpt = load_and_check(checkpoint, data, ds);
  scrl::ScrlModel model = scrl::model_from_checkpoint(ckpt);
  scrl::PropagationOps ops = scrl::build_ops(ds, ckpt.header.config);
  scrl::EvalOutputs eval = scrl::forward_eval(model, ops, ds.features);
  std::ofstream of(out);
  if (!of) throw std::runtime_error("cannot write " + out);
  of << std::setprecision(17);
  for (Eigen::Index i = 0; i < eval.consensus.rows(); ++i) {
    of << i << "\t" << ds.labels[i];
    for (Eigen::Index j = 0; j < eval.consensus.cols(); ++j) of << "\t" << eval.consensus(i, j);
    of << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SCRL: self-supervised consensus representation learning on attributed graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SCRL_VERSION);

  // The determinism contract is the default; the variable is accepted
  // so scripts can request relaxation, but every kernel here is
  // sequential and bit-reproducible regardless.
  if (std::getenv("SCRL_DETERMINISTIC") != nullptr) {
    // accepted for script compatibility; nothing to switch
  }

  TrainFlags train_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write a run directory");
  add_train_options(train_cmd, train_flags);

  std::string bk_data, bk_out = "knn_edges.txt";
  int bk_k = 7;
  CLI::App* bk = app.add_subcommand("build-knn", "write the cosine kNN feature graph");
  bk->add_option("--data", bk_data)->required();
  bk->add_option("--k", bk_k);
  bk->add_option("--out", bk_out);

  std::string ms_data, ms_out;
  int ms_lpc = 20, ms_val = 500, ms_test = 1000;
  std::uint64_t ms_seed = 0;
  CLI::App* ms = app.add_subcommand("make-splits", "generate train/val/test splits");
  ms->add_option("--data", ms_data)->required();
  ms->add_option("--lpc", ms_lpc, "labeled nodes per class");
  ms->add_option("--val-size", ms_val);
  ms->add_option("--test-size", ms_test);
  ms->add_option("--seed", ms_seed);
  ms->add_option("--out", ms_out, "output path (default <data>/splits.json)");

  std::string ev_ckpt, ev_data;
  CLI::App* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();

  std::string ex_ckpt, ex_data, ex_out = "embeddings.tsv";
  CLI::App* ex = app.add_subcommand("export-embeddings",
                                    "write the consensus representation as TSV");
  ex->add_option("--checkpoint", ex_ckpt)->required();
  ex->add_option("--data", ex_data)->required();
  ex->add_option("--out", ex_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_flags);
    if (bk->parsed()) return cmd_build_knn(bk_data, bk_k, bk_out);
    if (ms->parsed()) return cmd_make_splits(ms_data, ms_lpc, ms_val, ms_test, ms_seed, ms_out);
    if (ev->parsed()) return cmd_evaluate(ev_ckpt, ev_data);
    if (ex->parsed()) return cmd_export_embeddings(ex_ckpt, ex_data, ex_out);
  } catch (const scrl::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
