#pragma once

// `forge` command line. Exit codes: 0 success, 1 validation error (bad
// graph, flags or config), 2 I/O error. Results go to `out`, diagnostics
// to `err`.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "forge/arena.hpp"
#include "forge/complexity.hpp"
#include "forge/dataset_spec.hpp"
#include "forge/dsl.hpp"
#include "forge/metrics.hpp"
#include "forge/service.hpp"
#include "forge/training.hpp"
#include "forge/wire.hpp"

namespace forge::cli {

inline constexpr int kOk = 0;
inline constexpr int kValidationError = 1;
inline constexpr int kIoError = 2;

/// Error carrying the exit code to use.
struct Failure {
  int code;
  std::string message;
};

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kIoError, "cannot read '" + path + "'"};
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw Failure{kIoError, "cannot write '" + path + "'"};
}

/// Reads and parses a .graph file; positioned errors become a Failure.
inline GraphSpec load_graph(const std::string& path) {
  auto parsed = parse(read_text(path));
  if (!parsed) {
    std::string msg;
    for (const auto& e : parsed.errors)
      msg += path + ":" + std::to_string(e.line) + ":" + std::to_string(e.column) + ": " +
             std::string(category_name(e.category)) + " error: " + e.message + "\n";
    if (!msg.empty()) msg.pop_back();
    throw Failure{kValidationError, msg};
  }
  return *parsed.spec;
}

struct DatasetFlags {
  std::string synthetic;
  std::string idx_images, idx_labels, idx_test_images, idx_test_labels;
  std::size_t classes = 10;

  void attach(CLI::App& cmd) {
    auto* syn = cmd.add_option("--synthetic", synthetic,
                               "Synthetic blobs, e.g. n=10,dim=64,m=100,spread=0.15[,seed=42]");
    auto* img = cmd.add_option("--idx-images", idx_images, "IDX image file");
    cmd.add_option("--idx-labels", idx_labels, "IDX label file");
    cmd.add_option("--idx-test-images", idx_test_images, "Held-out IDX image file");
    cmd.add_option("--idx-test-labels", idx_test_labels, "Held-out IDX label file");
    cmd.add_option("--classes", classes, "Number of label classes for IDX data")->capture_default_str();
    syn->excludes(img);
  }

  /// Synthetic blobs default to seeding from the training seed.
  DatasetSpec spec(std::uint64_t train_seed) const {
    DatasetSpec d;
    if (!idx_images.empty() || !idx_labels.empty()) {
      if (idx_images.empty() || idx_labels.empty())
        throw Failure{kValidationError, "--idx-images and --idx-labels must be given together"};
      d.kind = DatasetSpec::Kind::Idx;
      d.images = idx_images;
      d.labels = idx_labels;
      d.test_images = idx_test_images;
      d.test_labels = idx_test_labels;
      d.n_classes = classes;
      return d;
    }
    BlobOptions base;
    base.seed = train_seed;
    try {
      d.blobs = parse_blob_options(synthetic, base);
    } catch (const std::invalid_argument& e) {
      throw Failure{kValidationError, std::string("--synthetic: ") + e.what()};
    }
    return d;
  }
};

struct TrainFlags {
  TrainConfig config;

  void attach(CLI::App& cmd) {
    cmd.add_option("--batch", config.batch_size, "Minibatch size")->capture_default_str();
    cmd.add_option("--lr", config.learning_rate, "SGD learning rate")->capture_default_str();
    cmd.add_option("--steps", config.steps, "Training steps")->capture_default_str();
    cmd.add_option("--seed", config.seed, "Seed for init, data order and eval sampling")->capture_default_str();
    cmd.add_option("--eval-every", config.eval_interval, "Steps between metric samples")->capture_default_str();
    cmd.add_option("--eval-batch", config.eval_batch_size, "Eval sample size")->capture_default_str();
  }

  const TrainConfig& checked() const {
    if (auto why = config.check(); !why.empty()) throw Failure{kValidationError, why};
    return config;
  }
};

inline std::shared_ptr<const Dataset> load_data(const DatasetSpec& spec) {
  try {
    return load_dataset(spec);
  } catch (const DataError& e) {
    const bool io = e.kind() == DataErrorKind::Io || e.kind() == DataErrorKind::WrongMagic ||
                    e.kind() == DataErrorKind::Truncated || e.kind() == DataErrorKind::SizeOverflow;
    throw Failure{io ? kIoError : kValidationError, e.what()};
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"forge: author, train, score and battle dataflow graphs"};
  app.require_subcommand(1);

  std::string parse_file;
  auto* cmd_parse = app.add_subcommand("parse", "Validate a .graph file and print its shapes");
  cmd_parse->add_option("file", parse_file, ".graph file")->required();

  std::string train_graph, train_out;
  DatasetFlags train_data;
  TrainFlags train_flags;
  auto* cmd_train = app.add_subcommand("train", "Train a graph and record its metric curves");
  cmd_train->add_option("--graph", train_graph, ".graph file")->required();
  cmd_train->add_option("--out", train_out, "Write the metric curves as CSV");
  train_data.attach(*cmd_train);
  train_flags.attach(*cmd_train);

  std::string battle_a, battle_b;
  DatasetFlags battle_data;
  TrainFlags battle_flags;
  std::vector<std::string> battle_priority;
  auto* cmd_battle = app.add_subcommand("battle", "Train two graphs under one budget and compare them");
  cmd_battle->add_option("a", battle_a, "Contender A .graph file")->required();
  cmd_battle->add_option("b", battle_b, "Contender B .graph file")->required();
  cmd_battle->add_option("--priority", battle_priority, "Comparison order (accuracy, infoacc)");
  battle_data.attach(*cmd_battle);
  battle_flags.attach(*cmd_battle);

  std::string cx_graph, cx_ref;
  auto* cmd_cx = app.add_subcommand("complexity", "Print bit measures of a graph as JSON");
  cmd_cx->add_option("--graph", cx_graph, ".graph file")->required();
  cmd_cx->add_option("--ncd", cx_ref, "Reference .graph file for the compression distance");

  int port = 8080;
  std::string host = "127.0.0.1";
  auto* cmd_serve = app.add_subcommand("serve", "Run the HTTP session service");
  cmd_serve->add_option("--port", port, "Port")->capture_default_str();
  cmd_serve->add_option("--host", host, "Bind address")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "forge: " << e.what() << "\n";
    return kValidationError;
  }

  try {
    if (cmd_parse->parsed()) {
      const GraphSpec spec = load_graph(parse_file);
      const auto graph = validate(spec).value();
      out << node_count(spec) << " nodes\n";
      for (const auto& [name, shape] : graph.shapes()) out << name << " " << shape.str() << "\n";
      return kOk;
    }

    if (cmd_train->parsed()) {
      const TrainConfig& config = train_flags.checked();
      const GraphSpec spec = load_graph(train_graph);
      auto data = load_data(train_data.spec(config.seed));
      std::optional<TrainingSession> session;
      try {
        session.emplace(validate(spec).value(), data, config);
      } catch (const std::invalid_argument& e) {
        throw Failure{kValidationError, e.what()};
      }
      session->run();
      const MetricPoint final = session->final_evaluation();
      if (!train_out.empty()) write_text(train_out, export_csv(session->points()));
      out << "final_step " << final.step << "\n";
      out << "final_accuracy " << metrics_detail::fixed6(final.accuracy) << "\n";
      out << "final_infoacc " << chip_rating(final.infoacc) << "\n";
      return kOk;
    }

    if (cmd_battle->parsed()) {
      BattleConfig bc;
      bc.train = battle_flags.checked();
      if (!battle_priority.empty()) {
        bc.priority.clear();
        try {
          for (const auto& m : battle_priority) bc.priority.push_back(metric_from_name(m));
        } catch (const std::invalid_argument& e) {
          throw Failure{kValidationError, e.what()};
        }
      }
      const GraphSpec a = load_graph(battle_a);
      const GraphSpec b = load_graph(battle_b);
      const DatasetSpec dspec = battle_data.spec(bc.train.seed);
      bc.dataset_id = dspec.id();
      auto data = load_data(dspec);
      BattleResult result;
      try {
        result = run_battle(a, b, data, bc, battle_a, battle_b);
      } catch (const std::invalid_argument& e) {
        throw Failure{kValidationError, e.what()};
      }
      out << wire::to_json(result).dump(2) << "\n";
      return kOk;
    }

    if (cmd_cx->parsed()) {
      const GraphSpec spec = load_graph(cx_graph);
      std::optional<GraphSpec> ref;
      if (!cx_ref.empty()) ref = load_graph(cx_ref);
      out << wire::to_json(complexity_report(spec, ref ? &*ref : nullptr)).dump(2) << "\n";
      return kOk;
    }

    if (cmd_serve->parsed()) {
      SessionService service;
      err << "forge: serving on http://" << host << ":" << port << "\n";
      if (!service.listen(host, port)) throw Failure{kIoError, "cannot listen on " + host + ":" + std::to_string(port)};
      return kOk;
    }
  } catch (const Failure& f) {
    err << "forge: " << f.message << "\n";
    return f.code;
  } catch (const NumericError& e) {
    err << "forge: " << e.what() << "\n";
    return kValidationError;
  }
  return kOk;
}

}  // namespace forge::cli
