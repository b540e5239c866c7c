#include "fairvit/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "fairvit/checkpoint.hpp"
#include "fairvit/data.hpp"
#include "fairvit/rollout.hpp"

namespace fairvit::cli {
namespace {

const std::vector<std::pair<std::string, std::string>>& defaults() {
  static const std::vector<std::pair<std::string, std::string>> table{
      {"alpha", "0.01"},         {"gamma", "0.5"},
      {"groups", "10"},          {"k", "2"},
      {"epochs", "20"},          {"threshold", "0.001"},
      {"lr", "0.001"},           {"batch_size", "16"},
      {"seed", "0"},             {"train_ratio", "0.9"},
      {"freeze_bank", "false"},  {"image_size", "32"},
      {"channels", "1"},         {"patch_size", "8"},
      {"layers", "2"},           {"heads", "2"},
      {"head_dim", "16"},        {"ffn_hidden", "64"},
      {"num_classes", "2"},      {"data", ""},
      {"target_attr", kSynthTargetAttr}, {"sensitive_attr", kSynthSensitiveAttr},
      {"out", "run"},            {"n", "2000"},
      {"correlation", "0.8"},    {"checkpoint", ""},
      {"label", ""},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& [k, v] : defaults()) values_[k] = v;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, v] : defaults()) out.push_back(k);
    return out;
  }();
  return names;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + " has no '='");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!values_.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' needs a number, got '" + v + "'");
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' needs a non-negative integer, got '" + v + "'");
  }
}

std::size_t RunConfig::get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' needs true/false, got '" + v + "'");
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.alpha = get_double("alpha");
  t.gamma = get_double("gamma");
  t.groups = get_size("groups");
  t.k = get_size("k");
  t.epochs = get_size("epochs");
  t.threshold = get_double("threshold");
  t.lr = get_double("lr");
  t.batch_size = get_size("batch_size");
  t.seed = get_u64("seed");
  t.train_ratio = get_double("train_ratio");
  t.freeze_bank = get_bool("freeze_bank");
  t.model.image_size = get_size("image_size");
  t.model.channels = get_size("channels");
  t.model.patch_size = get_size("patch_size");
  t.model.num_layers = get_size("layers");
  t.model.num_heads = get_size("heads");
  t.model.head_dim = get_size("head_dim");
  t.model.ffn_hidden = get_size("ffn_hidden");
  t.model.num_classes = get_size("num_classes");
  t.validate();
  return t;
}

std::string RunConfig::resolved_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

namespace {

std::filesystem::path prepare_out_dir(const RunConfig& cfg) {
  const std::filesystem::path dir = cfg.get("out");
  if (dir.empty()) throw ConfigError("out must not be empty");
  std::filesystem::create_directories(dir);
  write_text(dir / "config.resolved", cfg.resolved_text());
  return dir;
}

const std::string& require(const RunConfig& cfg, const std::string& key) {
  const auto& v = cfg.get(key);
  if (v.empty()) throw ConfigError("missing required setting '" + key + "'");
  return v;
}

void cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const auto samples = synth_biased_dataset(cfg.get_size("n"), cfg.get_double("correlation"),
                                            cfg.get_size("image_size"), cfg.get_u64("seed"));
  const auto dir = prepare_out_dir(cfg);
  materialize_dataset(dir, samples);
  out << "wrote " << samples.size() << " samples to " << dir.string() << '\n';
}

void cmd_split(const RunConfig& cfg, std::ostream& out) {
  const std::filesystem::path data = require(cfg, "data");
  auto records = parse_attributes(data / kAttributeFileName, cfg.get("target_attr"), cfg.get("sensitive_attr"));
  const auto assignment = split_groups(records, cfg.get_size("groups"), derive_seed(cfg.get_u64("seed"), "split-groups"));
  const auto dir = prepare_out_dir(cfg);
  write_text(dir / "split.txt", assignment_to_text(records, assignment));
  for (std::size_t g = 1; g <= assignment.groups; ++g) {
    out << "part " << g << ": " << assignment.counts[g - 1] << " samples\n";
  }
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  const auto train_cfg = cfg.train_config();
  const std::filesystem::path data_dir = require(cfg, "data");
  const auto dataset = load_dataset(data_dir, cfg.get("target_attr"), cfg.get("sensitive_attr"));
  const auto data = prepare_training_data(dataset, train_cfg);
  const auto dir = prepare_out_dir(cfg);

  std::ofstream log(dir / "run.log", std::ios::trunc | std::ios::binary);
  if (!log) throw IoError("cannot write " + (dir / "run.log").string());
  const auto result = fit(data, train_cfg, [&](const EpochStats& stats, const auto& model, const auto& bank) {
    log << stats.to_text() << '\n';
    log.flush();
    out << stats.to_text() << '\n';
    write_checkpoint(dir / ("checkpoint_epoch" + std::to_string(stats.epoch) + ".fvit"),
                     checkpoint_tensors(model, bank));
  });
  write_checkpoint(dir / "model.fvit", checkpoint_tensors(result.model, result.bank));
  out << "trained " << result.history.size() << " epochs; checkpoint " << (dir / "model.fvit").string() << '\n';
}

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const auto loaded = load_model<float>(read_checkpoint(require(cfg, "checkpoint")));
  const auto test = load_dataset(require(cfg, "data"), cfg.get("target_attr"), cfg.get("sensitive_attr"));
  const auto report = evaluate_fairness(loaded.model, loaded.bank, test);
  const auto dir = prepare_out_dir(cfg);
  write_text(dir / "fairness_report.txt", report.to_text());
  out << report.to_text();
}

void cmd_explain(const RunConfig& cfg, const std::vector<std::string>& images, std::ostream& out) {
  if (images.empty()) throw ConfigError("explain needs at least one --image");
  const auto loaded = load_model<float>(read_checkpoint(require(cfg, "checkpoint")));
  const auto dir = prepare_out_dir(cfg);
  for (const auto& path : images) {
    const auto image = load_image(path);
    std::size_t label = 0;
    if (cfg.get("label").empty()) {
      NoGradGuard no_grad;
      label = argmax_label(loaded.model.forward(image, &loaded.bank).data());
    } else {
      label = cfg.get_size("label");
    }
    const auto result = gradient_attention_rollout(loaded.model, loaded.bank, image, label);
    const auto stem = dir / (std::filesystem::path(path).stem().string() + "_heat");
    render_heatmap(result, stem);
    out << path << " label=" << label << " -> " << stem.string() << ".{csv,pgm}\n";
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fairness-aware vision transformer toolkit", "fairvit"};
  app.require_subcommand(1);

  std::map<std::string, std::optional<std::string>> overrides;
  std::string config_path;
  std::vector<std::string> images;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth", "Generate a synthetic biased dataset"},
      {"split", "Assign samples to sensitive-group parts"},
      {"train", "Train a model and write checkpoints"},
      {"eval", "Compute the fairness report of a checkpoint"},
      {"explain", "Write gradient attention rollout heat maps"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key = value settings file");
    for (const auto& key : RunConfig::keys()) {
      std::string flags = "--" + key;
      if (key.find('_') != std::string::npos) {
        auto dashed = key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        flags += ",--" + dashed;
      }
      sub->add_option_function<std::string>(flags, [&overrides, key](const std::string& v) { overrides[key] = v; },
                                             "overrides config key " + key);
    }
    if (name == "explain") sub->add_option("--image", images, "PGM/PPM image to explain (repeatable)");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return kUsage;
  }

  const auto* chosen = app.get_subcommands().front();
  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
    for (const auto& [key, value] : overrides) {
      if (value) cfg.set(key, *value);
    }
    const auto& name = chosen->get_name();
    if (name == "synth") {
      cmd_synth(cfg, out);
    } else if (name == "split") {
      cmd_split(cfg, out);
    } else if (name == "train") {
      cmd_train(cfg, out);
    } else if (name == "eval") {
      cmd_eval(cfg, out);
    } else {
      cmd_explain(cfg, images, out);
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}

}  // namespace fairvit::cli
