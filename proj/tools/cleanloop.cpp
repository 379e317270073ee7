/*
 * Copyright 2026 The cleanloop Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line entry point: perturb, synth, run, serve.

#include <pthread.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cleanloop/dataset.hpp"
#include "cleanloop/error.hpp"
#include "cleanloop/experiment.hpp"
#include "cleanloop/serialization.hpp"
#include "cleanloop/service.hpp"
#include "cleanloop/synthetic.hpp"
#include "cleanloop/version.hpp"
#include "httplib.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace cleanloop {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct PerturbArgs {
  fs::path in;
  fs::path out;
  double rate = 0.05;
  std::uint64_t seed = 0;
};

int cmd_perturb(const PerturbArgs& args) {
  if (!(args.rate >= 0.0 && args.rate <= 1.0)) {
    throw ValidationError("--rate must lie in [0, 1]");
  }
  const Dataset clean = load_dataset(args.in);
  const Dataset noisy = perturb_labels(clean, args.rate, args.seed);
  save_dataset(noisy, args.out);
  const auto mask = error_mask(noisy);
  std::cout << std::count(mask.begin(), mask.end(), true) << " of "
            << noisy.instances.size() << " instances perturbed\n";
  return kExitOk;
}

struct SynthArgs {
  std::string kind = "classification";
  std::size_t instances = 2000;
  int classes = 2;
  std::uint64_t seed = 1;
  fs::path out;
};

int cmd_synth(const SynthArgs& args) {
  Dataset dataset;
  if (args.kind == "classification") {
    ClusterSpec spec;
    spec.instances = args.instances;
    spec.classes = args.classes;
    spec.seed = args.seed;
    dataset = make_cluster_classification(spec);
  } else if (args.kind == "sequence") {
    TaggingSpec spec;
    spec.sequences = args.instances;
    spec.tags = args.classes;
    spec.seed = args.seed;
    dataset = make_tagging_dataset(spec);
  } else {
    throw ValidationError("--kind must be classification or sequence");
  }
  save_dataset(dataset, args.out);
  return kExitOk;
}

struct RunArgs {
  fs::path dataset;
  std::optional<fs::path> manifest;
  std::string method = "active";
  int folds = 10;
  int epochs = 10;
  double lr = 0.1;
  int batch_size = 32;
  double l2 = 1e-6;
  int k = 50;
  int max_iters = 40;
  std::optional<std::size_t> budget;
  std::optional<double> error_threshold;
  int seeds = 3;
  std::uint64_t seed_base = 0;
  bool no_train_ens = false;
  bool no_test_ens = false;
  fs::path out;
};

struct ResolvedRun {
  fs::path dataset_path;
  std::string dataset_hash;
  ExperimentConfig config;
};

ResolvedRun resolve_from_flags(const RunArgs& args) {
  ResolvedRun run;
  run.dataset_path = args.dataset;
  auto& c = run.config;
  c.method = parse_experiment_method(args.method);
  c.seed_count = args.seeds;
  c.seed_base = args.seed_base;
  c.loop.folds = args.folds;
  c.loop.k = args.k;
  c.loop.trainer.epochs = args.epochs;
  c.loop.trainer.learning_rate = args.lr;
  c.loop.trainer.batch_size = args.batch_size;
  c.loop.trainer.l2 = args.l2;
  c.loop.ensemble.use_train_ensembling = !args.no_train_ens;
  c.loop.ensemble.use_test_ensembling = !args.no_test_ens;
  c.loop.stop.max_iterations = args.max_iters;
  c.loop.stop.budget = args.budget;
  c.loop.stop.error_fraction_threshold = args.error_threshold;
  return run;
}

ResolvedRun resolve_from_manifest(const fs::path& path) {
  const json j = read_json_file(path);
  if (j.value("v", 0) != 1 || j.value("command", "") != "run") {
    throw ValidationError(path.string() + " is not a run manifest");
  }
  ResolvedRun run;
  run.dataset_path = j.at("dataset").at("path").get<std::string>();
  run.dataset_hash = j.at("dataset").at("hash").get<std::string>();
  auto& c = run.config;
  c.method = parse_experiment_method(j.at("method").get<std::string>());
  c.seed_count = j.at("seed_count").get<int>();
  c.seed_base = j.at("seed_base").get<std::uint64_t>();
  c.loop = loop_config_from_json(j.at("config"));
  return run;
}

ordered_json manifest_json(const ResolvedRun& run) {
  const auto& c = run.config;
  ordered_json j;
  j["v"] = 1;
  j["tool"] = "cleanloop";
  j["version"] = kVersion;
  j["command"] = "run";
  j["dataset"] = {{"path", run.dataset_path.string()},
                  {"hash", run.dataset_hash}};
  j["method"] = to_string(c.method);
  j["seed_base"] = c.seed_base;
  j["seed_count"] = c.seed_count;
  ordered_json seeds = ordered_json::array();
  for (int i = 0; i < c.seed_count; ++i) seeds.push_back(c.seed_base + i);
  j["seeds"] = std::move(seeds);
  j["config"] = to_json(c.loop);
  return j;
}

// Removes every file it recorded unless committed.
class OutputGuard {
 public:
  explicit OutputGuard(fs::path dir) : dir_(std::move(dir)) {
    created_dir_ = !fs::exists(dir_);
    fs::create_directories(dir_);
  }
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& file : files_) fs::remove(file, ec);
    if (created_dir_) fs::remove(dir_, ec);
  }

  std::ofstream open(const std::string& name) {
    const auto path = dir_ / name;
    files_.push_back(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
  }

  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
  bool created_dir_ = false;
  bool committed_ = false;
};

int cmd_run(const RunArgs& args) {
  ResolvedRun run =
      args.manifest ? resolve_from_manifest(*args.manifest) : resolve_from_flags(args);
  run.config.validate();
  const std::string hash = file_content_hash(run.dataset_path);
  if (!run.dataset_hash.empty() && run.dataset_hash != hash) {
    throw ValidationError("dataset " + run.dataset_path.string() +
                          " does not match the manifest hash");
  }
  run.dataset_hash = hash;
  const Dataset dataset = load_dataset(run.dataset_path);
  if (!dataset.has_gold()) {
    throw ValidationError("run needs a dataset with gold labels (see perturb)");
  }

  const ExperimentResult result = run_experiment(dataset, run.config);

  OutputGuard guard(args.out);
  const auto write = [&](const std::string& name, const std::string& text) {
    auto out = guard.open(name);
    out << text;
    if (!out) throw Error("failed writing " + name);
  };
  write("manifest.json", manifest_json(run).dump(2) + "\n");
  write("aggregate.json", aggregate_to_json(result).dump(2) + "\n");
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const auto& seed_run = result.runs[i];
    const std::string stem = "seed" + std::to_string(i);
    write(stem + ".report.json", report_to_json(seed_run.report).dump(2) + "\n");
    {
      auto out = guard.open(stem + ".scores.csv");
      write_scores_csv(seed_run.scores, out);
    }
    {
      auto out = guard.open(stem + ".pr.csv");
      write_pr_csv(seed_run.report, out);
    }
  }
  guard.commit();
  std::cout << format_table(std::span(&result, 1));
  return kExitOk;
}

struct ServeArgs {
  int port = 8080;
  std::string host = "127.0.0.1";
  std::optional<fs::path> dataset;
  int k = 50;
  std::optional<fs::path> checkpoint;
};

int cmd_serve(const ServeArgs& args) {
  if (args.k <= 0) throw ValidationError("--k must be positive");
  if (args.dataset) load_dataset(*args.dataset);

  // Block termination signals before any thread starts so that only the
  // dedicated waiter below receives them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ServiceOptions options;
  options.checkpoint_dir = args.checkpoint;
  options.default_dataset = args.dataset;
  options.default_k = args.k;
  SessionService service(options);
  try {
    service.restore_checkpoints();
  } catch (const ValidationError& e) {
    // A bad checkpoint is a runtime failure, not a usage error.
    throw Error(e.what());
  }

  httplib::Server server;
  service.register_routes(server);
  // The library default adds SO_REUSEPORT, which would let a second server
  // share an occupied port.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR,
               reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  int port = args.port;
  if (port == 0) {
    port = server.bind_to_any_port(args.host);
    if (port < 0) port = -1;
  } else if (!server.bind_to_port(args.host, port)) {
    port = -1;
  }
  if (port < 0) {
    std::cerr << "cleanloop: cannot bind " << args.host << ":" << args.port
              << "\n";
    return kExitRuntime;
  }
  std::cout << "listening on " << args.host << ":" << port << std::endl;

  std::thread waiter([&server, signals] {
    int received = 0;
    sigwait(&signals, &received);
    server.stop();
  });
  const bool ok = server.listen_after_bind();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  service.shutdown();
  std::cout << "stopped; " << service.session_count() << " session(s) saved"
            << std::endl;
  return ok ? kExitOk : kExitRuntime;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Label error detection with an active correction loop"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  PerturbArgs perturb;
  auto* perturb_cmd =
      app.add_subcommand("perturb", "Inject label noise; gold labels are kept");
  perturb_cmd->add_option("--in", perturb.in, "Clean dataset")
      ->required()
      ->check(CLI::ExistingFile);
  perturb_cmd->add_option("--rate", perturb.rate, "Fraction of annotations")
      ->required();
  perturb_cmd->add_option("--seed", perturb.seed)->required();
  perturb_cmd->add_option("--out", perturb.out)->required();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset");
  synth_cmd->add_option("--kind", synth.kind)
      ->check(CLI::IsMember({"classification", "sequence"}));
  synth_cmd->add_option("--instances", synth.instances);
  synth_cmd->add_option("--classes", synth.classes, "Classes or tags");
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--out", synth.out)->required();

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a detection experiment");
  run_cmd->add_option("dataset", run.dataset, "Dataset with gold labels")
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--manifest", run.manifest,
                      "Re-run the configuration recorded in a manifest")
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--method", run.method,
                      "cu | dm | aum_prob | aum_logit | ensemble | active");
  run_cmd->add_option("--folds", run.folds);
  run_cmd->add_option("--epochs", run.epochs);
  run_cmd->add_option("--lr", run.lr);
  run_cmd->add_option("--batch-size", run.batch_size);
  run_cmd->add_option("--l2", run.l2);
  run_cmd->add_option("--k", run.k);
  run_cmd->add_option("--max-iters", run.max_iters);
  run_cmd->add_option("--budget", run.budget);
  run_cmd->add_option("--error-threshold", run.error_threshold);
  run_cmd->add_option("--seeds", run.seeds);
  run_cmd->add_option("--seed-base", run.seed_base);
  run_cmd->add_flag("--no-train-ens", run.no_train_ens);
  run_cmd->add_flag("--no-test-ens", run.no_test_ens);
  run_cmd->add_option("--out", run.out)->required();

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Start the session service");
  serve_cmd->add_option("--port", serve.port, "0 picks a free port");
  serve_cmd->add_option("--host", serve.host);
  serve_cmd->add_option("--dataset", serve.dataset)->check(CLI::ExistingFile);
  serve_cmd->add_option("--k", serve.k);
  serve_cmd->add_option("--checkpoint", serve.checkpoint,
                        "Directory for session checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*perturb_cmd) return cmd_perturb(perturb);
    if (*synth_cmd) return cmd_synth(synth);
    if (*run_cmd) {
      if (run.dataset.empty() == !run.manifest) {
        throw ValidationError("give either a dataset or --manifest");
      }
      return cmd_run(run);
    }
    if (*serve_cmd) return cmd_serve(serve);
  } catch (const ValidationError& e) {
    std::cerr << "cleanloop: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "cleanloop: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace
}  // namespace cleanloop

int main(int argc, char** argv) { return cleanloop::run_cli(argc, argv); }
