// Copyright 2026 The ocsd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "ocsd/checkpoint.hpp"
#include "ocsd/gradcheck.hpp"
#include "ocsd/image_io.hpp"
#include "ocsd/metrics.hpp"
#include "ocsd/network.hpp"
#include "ocsd/rng.hpp"
#include "ocsd/speckle.hpp"
#include "ocsd/training.hpp"

namespace ocsd::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kSubcommands = {"simulate", "train", "despeckle", "eval",
                                               "gradcheck"};

// Files written by a subcommand; removed unless commit() is reached.
class OutputGuard {
 public:
  OutputGuard() = default;
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const fs::path& p : files_) fs::remove(p, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) fs::remove(*it, ec);
  }
  void add(const fs::path& p) { files_.push_back(p); }
  /// Creates `dir` (and parents), remembering what did not exist before.
  void make_dir(const fs::path& dir) {
    std::vector<fs::path> missing;
    for (fs::path p = dir; !p.empty() && !fs::exists(p); p = p.parent_path()) {
      missing.push_back(p);
      if (p == p.parent_path()) break;
    }
    fs::create_directories(dir);
    dirs_.insert(dirs_.end(), missing.rbegin(), missing.rend());
  }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> files_;
  std::vector<fs::path> dirs_;
  bool committed_ = false;
};

fs::path partial_path(const fs::path& target) {
  return target.parent_path() /
         ("." + target.stem().string() + ".partial" + target.extension().string());
}

void finish_file(const fs::path& partial, const fs::path& target) {
  fs::rename(partial, target);
}

// Image written via a partial file, then renamed.
void write_image(OutputGuard& guard, const fs::path& target, const ImageGray& image) {
  const fs::path tmp = partial_path(target);
  guard.add(tmp);
  save_gray(tmp, image);
  guard.add(target);
  finish_file(tmp, target);
}

void write_text(OutputGuard& guard, const fs::path& target, const std::string& text) {
  const fs::path tmp = partial_path(target);
  guard.add(tmp);
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + target.string() + " for writing");
    f << text;
    if (!f) throw std::runtime_error("failed writing " + target.string());
  }
  guard.add(target);
  finish_file(tmp, target);
}

void log_config(std::ostream& err, const std::string& command, const json& config) {
  err << "ocsd " << command << " config " << config.dump() << "\n";
}

std::string seed_string(std::uint64_t seed) { return std::to_string(seed); }

json network_json(const NetworkConfig& c) {
  return json{{"over_channels", c.over_channels},
              {"under_channels", c.under_channels},
              {"seed", seed_string(c.seed)}};
}

json train_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},   {"epochs", c.epochs},
              {"tv_weight", c.tv_weight},           {"crop_size", c.crop_size},
              {"batch_size", c.batch_size},         {"looks", c.looks},
              {"crops_per_image", c.crops_per_image}, {"train_fraction", c.train_fraction},
              {"seed", seed_string(c.seed)},        {"beta1", c.beta1},
              {"beta2", c.beta2},                   {"epsilon", c.epsilon}};
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::array<int, kUnderDepth> parse_widths(const std::string& text) {
  std::array<int, kUnderDepth> w{};
  std::stringstream in(text);
  std::string item;
  std::size_t k = 0;
  while (std::getline(in, item, ',')) {
    if (k == w.size()) break;
    std::size_t used = 0;
    try {
      w[k] = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.empty()) {
      throw std::invalid_argument("--under-channels: '" + item + "' is not an integer");
    }
    ++k;
  }
  if (k != w.size() || in.rdbuf()->in_avail() > 0) {
    throw std::invalid_argument("--under-channels needs exactly " +
                                std::to_string(kUnderDepth) + " comma-separated widths");
  }
  return w;
}

NetworkConfig preset(const std::string& name) {
  if (name == "default") return NetworkConfig{};
  if (name == "small") return NetworkConfig::small();
  if (name == "tiny") return NetworkConfig::tiny();
  throw std::invalid_argument("unknown preset '" + name + "' (default, small, tiny)");
}

std::vector<fs::path> input_images(const fs::path& in) {
  Dataset ds = list_images(in);
  if (ds.paths.empty()) throw std::runtime_error("no .png or .pgm images in " + in.string());
  return ds.paths;
}

// simulate ------------------------------------------------------------

struct SimulateArgs {
  std::string in;
  std::string out;
  int looks = 1;
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  if (a.looks < 1) throw std::invalid_argument("--looks must be >= 1");
  const std::vector<fs::path> inputs = input_images(a.in);
  const fs::path out_dir(a.out);
  if (fs::exists(out_dir) && !fs::is_directory(out_dir)) {
    throw std::invalid_argument("--out must be a directory: " + a.out);
  }
  if (fs::is_directory(a.in) && fs::exists(out_dir) && fs::equivalent(a.in, out_dir)) {
    throw std::invalid_argument("--out must differ from the input directory");
  }
  log_config(err, "simulate",
             json{{"in", a.in}, {"out", a.out}, {"looks", a.looks}, {"seed", seed_string(a.seed)}});
  OutputGuard guard;
  guard.make_dir(out_dir);
  json entries = json::array();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ImageGray clean = load_gray(inputs[i]);
    const std::uint64_t s = derive_seed(a.seed, {streams::kSimulate, i});
    const fs::path target = out_dir / inputs[i].filename();
    write_image(guard, target, apply_speckle(clean, a.looks, s));
    entries.push_back({{"input", inputs[i].string()},
                       {"output", target.string()},
                       {"looks", a.looks},
                       {"seed", seed_string(s)}});
    out << target.string() << "\n";
  }
  json manifest{{"looks", a.looks}, {"seed", seed_string(a.seed)}, {"outputs", entries}};
  write_text(guard, out_dir / "manifest.json", manifest.dump(2) + "\n");
  guard.commit();
  return 0;
}

// train ---------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string preset = "default";
  std::optional<int> over_channels;
  std::optional<std::string> under_channels;
  TrainConfig train;
  std::optional<std::string> resume;
  std::optional<std::int64_t> max_steps;
  std::optional<std::string> loss_csv;
};

std::string history_csv(const TrainProgress& progress) {
  std::string csv = "epoch,train_loss,val_psnr\n";
  for (const EpochRecord& r : progress.history) {
    csv += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," +
           (r.val_psnr ? format_double(*r.val_psnr) : std::string()) + "\n";
  }
  return csv;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig cfg = a.train;
  NetworkConfig net = preset(a.preset);
  if (a.over_channels) net.over_channels = *a.over_channels;
  if (a.under_channels) net.under_channels = parse_widths(*a.under_channels);
  net.seed = cfg.seed;
  std::optional<Checkpoint> resumed;
  if (a.resume) {
    resumed = load_checkpoint(*a.resume);
    if (!resumed->training || !resumed->adam) {
      throw std::invalid_argument(*a.resume + " holds no training state to resume from");
    }
    cfg = *resumed->training;
    net = resumed->network();
  }
  cfg.validate();
  net.validate();
  if (a.max_steps && *a.max_steps < 0) throw std::invalid_argument("--max-steps must be >= 0");

  const fs::path ckpt_path(a.out);
  const fs::path csv_path = a.loss_csv ? fs::path(*a.loss_csv)
                                       : fs::path(a.out).replace_extension(".csv");
  std::vector<fs::path> paths = list_images(a.data).paths;
  if (paths.size() < 2) {
    throw std::invalid_argument("--data needs at least 2 images, found " +
                                std::to_string(paths.size()) + " in " + a.data);
  }
  auto [train_set, val_set] = split_dataset(paths, cfg.train_fraction, cfg.seed);

  json logged{{"data", a.data},
              {"out", a.out},
              {"loss_csv", csv_path.string()},
              {"resume", a.resume ? json(*a.resume) : json(nullptr)},
              {"max_steps", a.max_steps ? json(*a.max_steps) : json(nullptr)},
              {"network", network_json(net)},
              {"training", train_json(cfg)},
              {"train_images", train_set.paths.size()},
              {"val_images", val_set.paths.size()}};
  log_config(err, "train", logged);

  std::optional<Trainer> trainer;
  if (resumed) {
    trainer.emplace(cfg, std::move(resumed->params), std::move(*resumed->adam),
                    resumed->progress, load_all(train_set), load_all(val_set));
  } else {
    trainer.emplace(cfg, init_params<float>(net), load_all(train_set), load_all(val_set));
  }

  const auto start = std::chrono::steady_clock::now();
  std::int64_t done = 0;
  while (!trainer->finished() && (!a.max_steps || done < *a.max_steps)) {
    const std::size_t epochs_before = trainer->progress().history.size();
    trainer->step();
    ++done;
    if (trainer->progress().history.size() != epochs_before) {
      const EpochRecord& r = trainer->progress().history.back();
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      err << "epoch " << r.epoch << "/" << cfg.epochs << " loss " << format_double(r.train_loss)
          << " val_psnr " << (r.val_psnr ? format_double(*r.val_psnr) : std::string("n/a"))
          << " (" << format_double(secs) << " s)\n";
    }
  }

  OutputGuard guard;
  guard.add(ckpt_path);
  save_checkpoint(ckpt_path, make_checkpoint(*trainer));
  write_text(guard, csv_path, history_csv(trainer->progress()));
  guard.commit();
  out << ckpt_path.string() << "\n";
  if (!trainer->finished()) {
    err << "stopped after " << done << " steps at global step "
        << trainer->progress().global_step << " of " << trainer->total_steps()
        << "; continue with --resume " << ckpt_path.string() << "\n";
  }
  return 0;
}

// despeckle -----------------------------------------------------------

struct DespeckleArgs {
  std::string checkpoint;
  std::string in;
  std::string out;
};

int cmd_despeckle(const DespeckleArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  log_config(err, "despeckle",
             json{{"checkpoint", a.checkpoint},
                  {"in", a.in},
                  {"out", a.out},
                  {"network", network_json(ckpt.network())}});
  OutputGuard guard;
  if (fs::is_directory(a.in)) {
    const std::vector<fs::path> inputs = input_images(a.in);
    if (fs::exists(a.out) && !fs::is_directory(a.out)) {
      throw std::invalid_argument("--out must be a directory when --in is one");
    }
    if (fs::exists(a.out) && fs::equivalent(a.in, a.out)) {
      throw std::invalid_argument("--out must differ from the input directory");
    }
    guard.make_dir(a.out);
    for (const fs::path& p : inputs) {
      const fs::path target = fs::path(a.out) / p.filename();
      write_image(guard, target, despeckle(ckpt.params, load_gray(p)));
      out << target.string() << "\n";
    }
  } else {
    if (!is_image_path(a.out)) {
      throw std::invalid_argument("--out must end in .png or .pgm: " + a.out);
    }
    write_image(guard, a.out, despeckle(ckpt.params, load_gray(a.in)));
    out << a.out << "\n";
  }
  guard.commit();
  return 0;
}

// eval ----------------------------------------------------------------

struct EvalArgs {
  std::string test;
  std::optional<std::string> reference;
  std::vector<std::string> regions;
  std::optional<std::string> out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<RegionSpec> regions;
  for (const std::string& r : a.regions) regions.push_back(RegionSpec::parse(r));
  if (!a.reference && regions.empty()) {
    throw std::invalid_argument(
        "nothing to compute: give --reference (PSNR/SSIM) and/or --region (ENL/Cx)");
  }
  log_config(err, "eval",
             json{{"test", a.test},
                  {"reference", a.reference ? json(*a.reference) : json(nullptr)},
                  {"regions", a.regions},
                  {"out", a.out ? json(*a.out) : json(nullptr)}});
  const ImageGray test = load_gray(a.test);
  std::optional<ImageGray> ref;
  if (a.reference) ref = load_gray(*a.reference);
  const MetricReport report = evaluate(test, ref ? &*ref : nullptr, regions);
  out << to_table(report);
  const std::string js = to_json(report) + "\n";
  if (a.out) {
    OutputGuard guard;
    write_text(guard, *a.out, js);
    guard.commit();
  } else {
    out << js;
  }
  return 0;
}

// gradcheck -----------------------------------------------------------

struct GradcheckArgs {
  int seeds = 100;
  std::uint64_t seed = 0;
  std::optional<std::string> plant_bug;
  std::optional<std::string> out;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  GradAuditOptions opts;
  opts.seeds = a.seeds;
  opts.base_seed = a.seed;
  if (a.plant_bug) {
    std::string name = *a.plant_bug;
    double factor = 2.0;
    if (const auto colon = name.find(':'); colon != std::string::npos) {
      factor = std::stod(name.substr(colon + 1));
      name = name.substr(0, colon);
    }
    const std::optional<Op> op = op_from_name(name);
    if (!op || *op == Op::kLeaf) throw std::invalid_argument("unknown op '" + name + "'");
    opts.fault = std::make_pair(*op, factor);
  }
  log_config(err, "gradcheck",
             json{{"seeds", opts.seeds},
                  {"seed", seed_string(opts.base_seed)},
                  {"eps", opts.eps},
                  {"tolerance", opts.tolerance},
                  {"plant_bug", a.plant_bug ? json(*a.plant_bug) : json(nullptr)}});
  const auto start = std::chrono::steady_clock::now();
  const std::vector<GradCheckCase> cases = run_gradient_audit(opts);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::vector<std::string> failed;
  json report = json::array();
  for (const GradCheckCase& c : cases) {
    char line[128];
    std::snprintf(line, sizeof line, "%-16s %.3e  %s\n", c.name.c_str(), c.max_rel_error,
                  c.passed() ? "ok" : "FAIL");
    out << line;
    if (!c.passed()) failed.push_back(c.name);
    report.push_back({{"name", c.name},
                      {"max_rel_error", c.max_rel_error},
                      {"tolerance", c.tolerance},
                      {"passed", c.passed()}});
  }
  out << cases.size() << " cases, " << opts.seeds << " seeds, " << format_double(secs)
      << " s\n";
  if (a.out) {
    OutputGuard guard;
    write_text(guard, *a.out, report.dump(2) + "\n");
    guard.commit();
  }
  if (!failed.empty()) {
    std::string names;
    for (const std::string& n : failed) names += (names.empty() ? "" : ", ") + n;
    err << "gradient check failed for: " << names << "\n";
    return 1;
  }
  return 0;
}

std::string json_scalar(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) return format_double(v.get<double>());
  throw std::invalid_argument("config key '" + key + "' has an unsupported value " + v.dump());
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;
  std::ifstream f(*path);
  if (!f) throw std::invalid_argument("cannot read config file " + *path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config file " + *path + ": " + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config file " + *path + " is not an object");
  std::vector<std::string> flags;
  for (const auto& [key, value] : j.items()) {
    if (key == "config") throw std::invalid_argument("config files cannot nest 'config'");
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) flags.push_back(flag);
    } else if (value.is_null()) {
      continue;
    } else if (value.is_array()) {
      std::string joined;
      for (const json& v : value) joined += (joined.empty() ? "" : ",") + json_scalar(v, key);
      flags.push_back(flag);
      flags.push_back(joined);
    } else {
      flags.push_back(flag);
      flags.push_back(json_scalar(value, key));
    }
  }
  const auto sub = std::find_first_of(args.begin(), args.end(), kSubcommands.begin(),
                                      kSubcommands.end());
  std::vector<std::string> expanded(args.begin(), sub == args.end() ? sub : sub + 1);
  expanded.insert(expanded.end(), flags.begin(), flags.end());
  if (sub != args.end()) expanded.insert(expanded.end(), sub + 1, args.end());
  return expanded;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SAR despeckling with a dual-branch overcomplete/undercomplete CNN", "ocsd"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", "ocsd 0.1.0");
  std::string config_path;

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Apply multiplicative Gamma speckle to clean images");
  s->add_option("--in", sim.in, "Input image or directory")->required();
  s->add_option("--out", sim.out, "Output directory")->required();
  s->add_option("--looks", sim.looks, "Number of looks L")->capture_default_str();
  s->add_option("--seed", sim.seed, "Base seed")->capture_default_str();
  s->add_option("--config", config_path, "JSON file of flag values");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a network and write a checkpoint");
  t->add_option("--data", tr.data, "Directory of clean training images")->required();
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--preset", tr.preset, "Network widths: default, small or tiny")
      ->capture_default_str();
  t->add_option("--over-channels", tr.over_channels, "Overcomplete branch width");
  t->add_option("--under-channels", tr.under_channels, "Five comma-separated widths");
  t->add_option("--epochs", tr.train.epochs)->capture_default_str();
  t->add_option("--lr", tr.train.learning_rate)->capture_default_str();
  t->add_option("--tv-weight", tr.train.tv_weight)->capture_default_str();
  t->add_option("--crop", tr.train.crop_size)->capture_default_str();
  t->add_option("--batch", tr.train.batch_size)->capture_default_str();
  t->add_option("--looks", tr.train.looks)->capture_default_str();
  t->add_option("--crops-per-image", tr.train.crops_per_image)->capture_default_str();
  t->add_option("--train-fraction", tr.train.train_fraction)->capture_default_str();
  t->add_option("--beta1", tr.train.beta1)->capture_default_str();
  t->add_option("--beta2", tr.train.beta2)->capture_default_str();
  t->add_option("--adam-eps", tr.train.epsilon)->capture_default_str();
  t->add_option("--seed", tr.train.seed)->capture_default_str();
  t->add_option("--resume", tr.resume, "Continue from this checkpoint");
  t->add_option("--max-steps", tr.max_steps, "Stop after this many steps");
  t->add_option("--loss-csv", tr.loss_csv, "Loss curve path (default: <out>.csv)");
  t->add_option("--config", config_path, "JSON file of flag values");

  DespeckleArgs ds;
  auto* d = app.add_subcommand("despeckle", "Run a trained network on images");
  d->add_option("--checkpoint", ds.checkpoint)->required();
  d->add_option("--in", ds.in, "Input image or directory")->required();
  d->add_option("--out", ds.out, "Output image or directory")->required();
  d->add_option("--config", config_path, "JSON file of flag values");

  EvalArgs ev;
  std::uint64_t eval_seed = 0;
  auto* e = app.add_subcommand("eval", "PSNR/SSIM against a reference, ENL/Cx over regions");
  e->add_option("--test", ev.test)->required();
  e->add_option("--reference", ev.reference);
  e->add_option("--region", ev.regions, "x0,y0,w,h (repeatable)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  e->add_option("--out", ev.out, "JSON report path (default: stdout)");
  e->add_option("--seed", eval_seed, "Unused; accepted for uniformity");
  e->add_option("--config", config_path, "JSON file of flag values");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference audit of every backward pass");
  g->add_option("--seeds", gc.seeds)->capture_default_str();
  g->add_option("--seed", gc.seed)->capture_default_str();
  g->add_option("--out", gc.out, "JSON report path");
  g->add_option("--plant-bug", gc.plant_bug)->group("");
  g->add_option("--config", config_path, "JSON file of flag values");

  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 2;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err) == 0 ? 0 : 2;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim, out, err);
    if (t->parsed()) return cmd_train(tr, out, err);
    if (d->parsed()) return cmd_despeckle(ds, out, err);
    if (e->parsed()) return cmd_eval(ev, out, err);
    if (g->parsed()) return cmd_gradcheck(gc, out, err);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace ocsd::cli
