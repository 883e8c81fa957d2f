#include "biov/cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <ctime>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>

#include "biov/biencoder/checkpoint.hpp"
#include "biov/cli/report.hpp"
#include "biov/core/digest.hpp"
#include "biov/core/errors.hpp"
#include "biov/dreamviz/dream.hpp"
#include "biov/synthgen/synthgen.hpp"
#include "biov/trainer/trainer.hpp"

#ifndef BIOV_VERSION
#define BIOV_VERSION "0.0.0"
#endif

namespace biov {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

const char* tool_version() { return BIOV_VERSION; }

fs::path run_manifest_path(const fs::path& out, bool out_is_dir) {
  return out_is_dir ? out / "run_manifest.json" : fs::path(out.string() + ".manifest.json");
}

namespace {

// Config snapshot, input/output digests and timing for one subcommand run.
// "timestamp" and "wall_time_s" are the only fields that vary between
// identical runs.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> args)
      : command_(std::move(command)), args_(std::move(args)), t0_(std::chrono::steady_clock::now()) {}

  ojson& config() { return config_; }
  void input(const fs::path& p) { inputs_.push_back(p); }
  void output(const fs::path& p) { outputs_.push_back(p); }

  void write(const fs::path& file) const {
    ojson j;
    j["tool"] = "biov";
    j["version"] = tool_version();
    j["command"] = command_;
    j["args"] = args_;
    j["config"] = config_;
    auto digests = [](const std::vector<fs::path>& files) {
      ojson a = ojson::array();
      for (const auto& f : files) a.push_back({{"path", f.string()}, {"sha256", sha256_file(f)}});
      return a;
    };
    j["inputs"] = digests(inputs_);
    j["outputs"] = digests(outputs_);
    j["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["timestamp"] = stamp;
    write_file(file, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  ojson config_ = ojson::object();
  std::vector<fs::path> inputs_, outputs_;
  std::chrono::steady_clock::time_point t0_;
};

void add_pairs_inputs(RunManifest& rm, const fs::path& pairs_dir, std::initializer_list<SplitName> splits) {
  rm.input(pairs_dir / "pairs.json");
  rm.input(pairs_dir / "split.json");
  for (auto s : splits) rm.input(pair_file(pairs_dir, s));
  rm.input(read_pairs_info(pairs_dir).manifest);
}

struct SynthArgs {
  std::string out;
  std::size_t subjects = 0;
  double rho = 1.0;
  std::uint64_t seed = 0;
  std::size_t size = 64;
  int iris_captures = 2;
  int fp_captures = 10;
  double noise = 0.05;
};

int run_synth(const SynthArgs& a, RunManifest& rm, std::ostream& out) {
  RenderSpec spec;
  spec.image_size = a.size;
  spec.iris_captures = a.iris_captures;
  spec.fingerprint_captures = a.fp_captures;
  spec.capture_noise_sigma = a.noise;
  const fs::path dir = a.out;
  const auto m = generate_cohort(a.subjects, a.rho, spec, a.seed, dir);
  rm.config() = {{"subjects", a.subjects}, {"rho", a.rho},         {"seed", a.seed},
                 {"size", a.size},         {"iris_captures", a.iris_captures}, {"fp_captures", a.fp_captures},
                 {"noise", a.noise}};
  rm.output(dir / "manifest.jsonl");
  for (const auto& r : m.records) rm.output(m.resolve(r));
  rm.write(run_manifest_path(dir, true));
  out << "wrote " << m.records.size() << " images for " << a.subjects << " subjects to " << dir.string() << "\n";
  return kExitOk;
}

struct PairsArgs {
  std::string manifest, task, out;
  std::uint64_t seed = 0;
};

int run_pairs(const PairsArgs& a, RunManifest& rm, std::ostream& out) {
  const Task task = parse_task(a.task);
  const auto m = read_manifest(a.manifest);
  std::vector<std::string> ids;
  for (const auto& r : m.records) ids.push_back(r.subject);
  const auto split = split_subjects(ids, a.seed);
  const auto sets = build_pairs(m.records, split, task, a.seed);
  const fs::path dir = a.out;
  write_pairs_dir(dir, a.manifest, split, sets, a.seed);
  rm.config() = {{"task", a.task}, {"seed", a.seed}};
  rm.input(a.manifest);
  for (const char* f : {"pairs.json", "split.json"}) rm.output(dir / f);
  for (auto s : {SplitName::train, SplitName::val, SplitName::test}) rm.output(pair_file(dir, s));
  rm.write(run_manifest_path(dir, true));
  out << "pairs: train " << sets.train.pairs.size() << ", val " << sets.val.pairs.size() << ", test "
      << sets.test.pairs.size() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string pairs, task, backbone, config, out, init_iris, init_fp;
  std::optional<int> epochs, patience;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  bool quiet = false;
};

TrainConfig resolve_train_config(const TrainArgs& a) {
  std::string text = "{}";
  if (!a.config.empty()) text = read_file(a.config);
  ojson file;
  try {
    file = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(a.config, 0, e.what());
  }
  auto from_file = [&](const char* key) -> std::string {
    return file.is_object() && file.contains(key) && file[key].is_string() ? file[key].get<std::string>() : "";
  };
  const std::string task_s = !a.task.empty() ? a.task : from_file("task");
  const std::string backbone_s = !a.backbone.empty() ? a.backbone : from_file("backbone");
  if (task_s.empty()) throw InvalidArgument("no task given (--task or config file)");
  if (backbone_s.empty()) throw InvalidArgument("no backbone given (--backbone or config file)");
  const bool pretrained = !a.init_iris.empty() || (file.is_object() && file.contains("init_iris") && !file["init_iris"].is_null());

  auto c = default_train_config(parse_task(task_s), parse_backbone(backbone_s), pretrained);
  c = train_config_from_json(text, c, a.config.empty() ? "<config>" : a.config);
  c.task = parse_task(task_s);
  c.backbone = parse_backbone(backbone_s);
  if (!a.pairs.empty()) c.pairs_dir = a.pairs;
  if (!a.out.empty()) c.out_dir = a.out;
  if (!a.init_iris.empty()) c.init_iris = a.init_iris;
  if (!a.init_fp.empty()) c.init_fp = a.init_fp;
  if (a.epochs) c.max_epochs = *a.epochs;
  if (a.patience) c.patience = *a.patience;
  if (a.seed) c.seed = *a.seed;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.lr) c.base_lr = *a.lr;
  if (c.pairs_dir.empty()) throw InvalidArgument("no pairs directory given (--pairs or config file)");
  if (c.out_dir.empty()) throw InvalidArgument("no output directory given (--out or config file)");
  return c;
}

int run_train(const TrainArgs& a, RunManifest& rm, std::ostream& out, std::ostream& err) {
  const auto cfg = resolve_train_config(a);
  fs::create_directories(cfg.out_dir);
  write_file(cfg.out_dir / "config.json", train_config_to_json(cfg) + "\n");
  const bool quiet = a.quiet;
  const auto res = train(cfg, [&](const EpochLog& e) {
    if (quiet) return;
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d  loss %.5f  val_auc %.4f  lr %.3g\n", e.epoch, e.train_loss, e.val_auc, e.lr);
    err << buf << std::flush;
  });

  std::vector<double> loss, auc;
  for (const auto& e : res.log.epochs) {
    loss.push_back(e.train_loss);
    auc.push_back(e.val_auc);
  }
  write_file(cfg.out_dir / "loss_curve.svg", line_chart_svg("mean training loss", {"train loss"}, {loss}));
  write_file(cfg.out_dir / "val_auc_curve.svg", line_chart_svg("validation ROC AUC", {"val AUC"}, {auc}));

  rm.config() = ojson::parse(train_config_to_json(cfg));
  add_pairs_inputs(rm, cfg.pairs_dir, {SplitName::train, SplitName::val});
  if (!a.config.empty()) rm.input(a.config);
  if (cfg.init_iris) rm.input(*cfg.init_iris);
  if (cfg.init_fp) rm.input(*cfg.init_fp);
  for (const char* f : {"best.ckpt", "runlog.jsonl", "train_summary.json", "config.json", "loss_curve.svg",
                        "val_auc_curve.svg"}) {
    rm.output(cfg.out_dir / f);
  }
  rm.write(run_manifest_path(cfg.out_dir, true));
  out << "best epoch " << res.log.best_epoch << ", val AUC " << res.log.best_val_auc << "; checkpoint "
      << res.checkpoint.string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string pairs, ckpt, out, scores;
};

int run_eval(const EvalArgs& a, RunManifest& rm, std::ostream& out) {
  const auto rep = evaluate(a.ckpt, a.pairs);
  const fs::path report = a.out;
  if (report.has_parent_path()) fs::create_directories(report.parent_path());
  write_file(report, report_to_json(rep) + "\n");
  const fs::path scores = a.scores.empty() ? fs::path(report).replace_extension(".scores.csv") : fs::path(a.scores);
  write_file(scores, scores_to_csv(rep.pairs));
  rm.config() = {{"pairs", a.pairs}, {"ckpt", a.ckpt}};
  rm.input(a.ckpt);
  add_pairs_inputs(rm, a.pairs, {SplitName::val, SplitName::test});
  rm.output(report);
  rm.output(scores);
  rm.write(run_manifest_path(report, false));
  char buf[200];
  std::snprintf(buf, sizeof buf, "%s %s: AUC %.4f  acc %.4f  precision %.4f  recall %.4f\n", rep.task.c_str(),
                rep.backbone.c_str(), rep.roc_auc, rep.accuracy, rep.precision, rep.recall);
  out << buf;
  return kExitOk;
}

struct DreamArgs {
  std::string ckpt, layer, out, tower = "iris";
  std::optional<std::size_t> channel;
  int steps = 200;
  double step_size = 0.05;
  bool no_smooth = false;
  std::uint64_t seed = 0;
};

int run_dream(const DreamArgs& a, RunManifest& rm, std::ostream& out) {
  const auto model = load_checkpoint(a.ckpt);
  DreamConfig cfg;
  cfg.layer = a.layer;
  cfg.channel = a.channel;
  cfg.steps = a.steps;
  cfg.step_size = a.step_size;
  cfg.smoothing = !a.no_smooth;
  cfg.seed = a.seed;
  cfg.tower = a.tower == "fingerprint" ? Tower::B : Tower::A;
  const auto res = dream(model, cfg);
  const fs::path img = a.out;
  if (img.has_parent_path()) fs::create_directories(img.parent_path());
  write_pgm(img, res.image);
  const fs::path trace = fs::path(img).replace_extension(".trace.csv");
  write_file(trace, trace_to_csv(res.trace));
  rm.config() = {{"layer", a.layer},
                 {"channel", a.channel ? ojson(*a.channel) : ojson(nullptr)},
                 {"steps", a.steps},
                 {"step_size", a.step_size},
                 {"smoothing", cfg.smoothing},
                 {"seed", a.seed},
                 {"tower", a.tower}};
  rm.input(a.ckpt);
  rm.output(img);
  rm.output(trace);
  rm.write(run_manifest_path(img, false));
  out << "objective " << res.trace.front() << " -> " << res.trace.back() << (res.stalled ? " (stalled)" : "") << "\n";
  return kExitOk;
}

struct ReportArgs {
  std::vector<std::string> inputs, labels;
  std::string out;
};

int run_report(const ReportArgs& a, RunManifest& rm, std::ostream& out) {
  if (!a.labels.empty() && a.labels.size() != a.inputs.size()) {
    throw InvalidArgument("--labels needs one label per input");
  }
  std::vector<EvalReport> reports;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < a.inputs.size(); ++i) {
    reports.push_back(report_from_json(read_file(a.inputs[i]), a.inputs[i]));
    labels.push_back(a.labels.empty() ? reports.back().task + "/" + reports.back().backbone : a.labels[i]);
  }
  // Repeated labels get the file stem, then the input position.
  auto disambiguate = [&](auto suffix) {
    const auto before = labels;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (std::count(before.begin(), before.end(), before[i]) > 1) labels[i] += suffix(i);
    }
  };
  disambiguate([&](std::size_t i) { return " (" + fs::path(a.inputs[i]).stem().string() + ")"; });
  disambiguate([](std::size_t i) { return " #" + std::to_string(i + 1); });
  const fs::path dir = a.out;
  fs::create_directories(dir);
  std::string csv = "label,task,backbone";
  for (const auto& m : report_metric_names()) csv += "," + m;
  csv += "\n";
  char buf[64];
  for (std::size_t i = 0; i < reports.size(); ++i) {
    csv += labels[i] + "," + reports[i].task + "," + reports[i].backbone;
    for (const auto& m : report_metric_names()) {
      std::snprintf(buf, sizeof buf, ",%.17g", report_metric(reports[i], m));
      csv += buf;
    }
    csv += "\n";
  }
  write_file(dir / "metrics.csv", csv);
  rm.output(dir / "metrics.csv");
  for (const auto& m : report_metric_names()) {
    std::vector<ChartSeries> bars;
    for (std::size_t i = 0; i < reports.size(); ++i) bars.push_back({labels[i], report_metric(reports[i], m)});
    write_file(dir / (m + ".svg"), bar_chart_svg(m, bars));
    rm.output(dir / (m + ".svg"));
  }
  rm.config() = {{"labels", labels}};
  for (const auto& f : a.inputs) rm.input(f);
  rm.write(run_manifest_path(dir, true));
  out << "charted " << reports.size() << " reports into " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Biometric pair verification: synthetic data, bi-encoder training, evaluation and visualization", "biov"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic iris/fingerprint cohort");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--subjects", sa.subjects, "Number of subjects")->required();
  synth->add_option("--rho", sa.rho, "Cross-trait correlation in [0, 1]")->required();
  synth->add_option("--seed", sa.seed, "Seed")->required();
  synth->add_option("--size", sa.size, "Image side in pixels")->capture_default_str();
  synth->add_option("--iris-captures", sa.iris_captures, "Captures per eye")->capture_default_str();
  synth->add_option("--fp-captures", sa.fp_captures, "Captures per finger")->capture_default_str();
  synth->add_option("--noise", sa.noise, "Capture noise sigma")->capture_default_str();

  PairsArgs pa;
  auto* pairs = app.add_subcommand("pairs", "Split subjects and build balanced pair sets");
  pairs->add_option("--manifest", pa.manifest, "Cohort manifest.jsonl")->required();
  pairs->add_option("--task", pa.task, "iris-iris, fp-fp or cross")->required()->check(CLI::IsMember({"iris-iris", "fp-fp", "cross"}));
  pairs->add_option("--seed", pa.seed, "Seed")->required();
  pairs->add_option("--out", pa.out, "Output directory")->required();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a bi-encoder on a pairs directory");
  trn->add_option("--pairs", ta.pairs, "Pairs directory");
  trn->add_option("--task", ta.task, "iris-iris, fp-fp or cross")->check(CLI::IsMember({"iris-iris", "fp-fp", "cross"}));
  trn->add_option("--backbone", ta.backbone, "smallcnn or tinyvit")->check(CLI::IsMember({"smallcnn", "tinyvit"}));
  trn->add_option("--config", ta.config, "JSON config; flags override its values");
  trn->add_option("--out", ta.out, "Output directory");
  trn->add_option("--init-iris", ta.init_iris, "Pretrained iris-iris checkpoint (cross task)");
  trn->add_option("--init-fp", ta.init_fp, "Pretrained fp-fp checkpoint (cross task)");
  trn->add_option("--epochs", ta.epochs, "Maximum epochs");
  trn->add_option("--patience", ta.patience, "Early-stopping patience");
  trn->add_option("--seed", ta.seed, "Seed");
  trn->add_option("--batch-size", ta.batch_size, "Pairs per batch");
  trn->add_option("--lr", ta.lr, "Base learning rate");
  trn->add_flag("--quiet", ta.quiet, "No per-epoch progress");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test pairs");
  ev->add_option("--pairs", ea.pairs, "Pairs directory")->required();
  ev->add_option("--ckpt", ea.ckpt, "Checkpoint")->required();
  ev->add_option("--out", ea.out, "Report JSON path")->required();
  ev->add_option("--scores", ea.scores, "Per-pair CSV path (default: next to the report)");

  DreamArgs da;
  auto* dr = app.add_subcommand("dream", "Visualize what a layer responds to");
  dr->add_option("--ckpt", da.ckpt, "Checkpoint")->required();
  dr->add_option("--layer", da.layer, "Layer path, e.g. backbone.block1.conv")->required();
  dr->add_option("--channel", da.channel, "Channel index (default: mean of all)");
  dr->add_option("--out", da.out, "Output PGM")->required();
  dr->add_option("--steps", da.steps, "Ascent steps")->capture_default_str();
  dr->add_option("--step-size", da.step_size, "Step size")->capture_default_str();
  dr->add_flag("--no-smooth", da.no_smooth, "Disable periodic blur");
  dr->add_option("--seed", da.seed, "Seed")->capture_default_str();
  dr->add_option("--tower", da.tower, "iris or fingerprint (two-tower models)")->check(CLI::IsMember({"iris", "fingerprint"}));

  ReportArgs ra;
  auto* rp = app.add_subcommand("report", "Bar charts of metrics across evaluation reports");
  rp->add_option("--inputs", ra.inputs, "Report JSON files")->required()->expected(1, -1);
  rp->add_option("--labels", ra.labels, "Bar labels, one per input")->expected(1, -1);
  rp->add_option("--out", ra.out, "Output directory")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << tool_version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
    err << (sub ? sub->help() : app.help());
    return kExitUsage;
  }

  auto* sub = app.get_subcommands().front();
  RunManifest rm(sub->get_name(), args);
  try {
    if (sub == synth) return run_synth(sa, rm, out);
    if (sub == pairs) return run_pairs(pa, rm, out);
    if (sub == trn) return run_train(ta, rm, out, err);
    if (sub == ev) return run_eval(ea, rm, out);
    if (sub == dr) return run_dream(da, rm, out);
    return run_report(ra, rm, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cli_dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace biov
