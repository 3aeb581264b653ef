#include "dpwav/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "dpwav/accountant.hpp"
#include "dpwav/rng.hpp"

namespace dpwav::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::uint64_t kStreamDataset = 6;

bool log_enabled() {
  const char* v = std::getenv("DPWAV_LOG");
  return v != nullptr && std::string(v) == "debug";
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw SpecParseError(line, "expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    unsigned long long u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return u;
  } catch (const std::exception&) {
    throw SpecParseError(line, "expected a non-negative integer, got '" + v + "'");
  }
}

int parse_int(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return i;
  } catch (const std::exception&) {
    throw SpecParseError(line, "expected an integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw SpecParseError(line, "expected true/false, got '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& v, int line) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), line));
  if (out.empty()) throw SpecParseError(line, "expected a comma-separated list");
  return out;
}

// Raw key/value pairs of one section, with line numbers for diagnostics.
struct Section {
  std::map<std::string, std::pair<std::string, int>> kv;
  std::vector<std::string> order;
  int line = 0;

  bool has(const std::string& key) const { return kv.count(key) > 0; }
  std::string get(const std::string& key) const { return kv.at(key).first; }
  int line_of(const std::string& key) const { return kv.at(key).second; }
};

struct RawSpec {
  Section experiment, dataset, model, defaults;
  std::vector<std::pair<std::string, Section>> arms;
};

RawSpec read_sections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecParseError(0, "cannot open spec file: " + path);

  RawSpec raw;
  Section* current = nullptr;
  std::set<std::string> arm_names;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string::size_type hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw SpecParseError(lineno, "unterminated section header");
      std::string name = trim(t.substr(1, t.size() - 2));
      if (name == "experiment") current = &raw.experiment;
      else if (name == "dataset") current = &raw.dataset;
      else if (name == "model") current = &raw.model;
      else if (name == "defaults") current = &raw.defaults;
      else if (name.rfind("arm ", 0) == 0) {
        std::string arm = trim(name.substr(4));
        if (arm.empty()) throw SpecParseError(lineno, "arm section needs a name");
        if (!arm_names.insert(arm).second)
          throw SpecParseError(lineno, "duplicate arm name '" + arm + "'");
        raw.arms.emplace_back(arm, Section{});
        current = &raw.arms.back().second;
      } else {
        throw SpecParseError(lineno, "unknown section '" + name + "'");
      }
      current->line = lineno;
      continue;
    }
    std::string::size_type eq = t.find('=');
    if (eq == std::string::npos)
      throw SpecParseError(lineno, "expected 'key = value', got '" + t + "'");
    if (current == nullptr)
      throw SpecParseError(lineno, "key/value pair outside any section");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty() || value.empty())
      throw SpecParseError(lineno, "empty key or value");
    if (current->kv.count(key))
      throw SpecParseError(lineno, "duplicate key '" + key + "'");
    current->kv[key] = {value, lineno};
    current->order.push_back(key);
  }
  return raw;
}

void check_keys(const Section& s, const std::set<std::string>& allowed,
                const std::string& section_name) {
  for (const auto& key : s.order)
    if (!allowed.count(key))
      throw SpecParseError(s.line_of(key),
                           "unknown key '" + key + "' in section [" + section_name + "]");
}

void apply_arm_keys(fed::FederationConfig& cfg, const Section& s, const std::string& name) {
  static const std::set<std::string> allowed = {
      "mechanism",       "clients",       "client_sampling", "rounds",
      "local_iterations", "lot_size",     "clip",            "clip_proxy",
      "clip_per_layer",  "sigma",         "sigma_is_effective", "optimizer",
      "learning_rate",   "delta",         "seed"};
  check_keys(s, allowed, name);

  if (s.has("mechanism")) {
    try {
      cfg.mechanism = fed::mechanism_from_name(s.get("mechanism"));
    } catch (const std::invalid_argument& e) {
      throw SpecParseError(s.line_of("mechanism"), e.what());
    }
  }
  if (s.has("clients")) cfg.total_clients = parse_u64(s.get("clients"), s.line_of("clients"));
  if (s.has("client_sampling"))
    cfg.client_sampling = parse_double(s.get("client_sampling"), s.line_of("client_sampling"));
  if (s.has("rounds")) cfg.rounds = parse_int(s.get("rounds"), s.line_of("rounds"));
  if (s.has("local_iterations"))
    cfg.local_iterations = parse_int(s.get("local_iterations"), s.line_of("local_iterations"));
  if (s.has("lot_size")) cfg.lot_size = parse_u64(s.get("lot_size"), s.line_of("lot_size"));
  if (s.has("clip")) {
    std::string v = s.get("clip");
    if (v == "median") {
      cfg.clip.use_median = true;
    } else {
      cfg.clip.use_median = false;
      double c = parse_double(v, s.line_of("clip"));
      if (!(c > 0.0)) throw SpecParseError(s.line_of("clip"), "clip must be positive");
      cfg.clip.policy = mech::ClippingPolicy::flat(c);
    }
  }
  if (s.has("clip_per_layer")) {
    if (s.has("clip"))
      throw SpecParseError(s.line_of("clip_per_layer"), "clip and clip_per_layer are exclusive");
    cfg.clip.use_median = false;
    cfg.clip.policy = mech::ClippingPolicy::per_layer_bounds(
        parse_double_list(s.get("clip_per_layer"), s.line_of("clip_per_layer")));
  }
  if (s.has("clip_proxy"))
    cfg.clip.median_proxy_count = parse_u64(s.get("clip_proxy"), s.line_of("clip_proxy"));
  if (s.has("sigma")) cfg.sigma = parse_double(s.get("sigma"), s.line_of("sigma"));
  if (s.has("sigma_is_effective"))
    cfg.sigma_is_effective =
        parse_bool(s.get("sigma_is_effective"), s.line_of("sigma_is_effective"));
  if (s.has("optimizer")) {
    std::string v = s.get("optimizer");
    if (v == "sgd") cfg.optimizer.rule = models::OptimizerState::Rule::Sgd;
    else if (v == "adam") cfg.optimizer.rule = models::OptimizerState::Rule::Adam;
    else if (v == "adagrad") cfg.optimizer.rule = models::OptimizerState::Rule::AdaGrad;
    else throw SpecParseError(s.line_of("optimizer"), "unknown optimizer '" + v + "'");
  }
  if (s.has("learning_rate"))
    cfg.optimizer.learning_rate = parse_double(s.get("learning_rate"), s.line_of("learning_rate"));
  if (s.has("delta")) cfg.delta = parse_double(s.get("delta"), s.line_of("delta"));
  if (s.has("seed")) cfg.seed = parse_u64(s.get("seed"), s.line_of("seed"));
}

} // namespace

ExperimentSpec parse_spec_file(const std::string& path) {
  RawSpec raw = read_sections(path);
  ExperimentSpec spec;

  check_keys(raw.experiment, {"out", "seed"}, "experiment");
  if (raw.experiment.has("out")) spec.out_dir = raw.experiment.get("out");
  if (raw.experiment.has("seed"))
    spec.seed = parse_u64(raw.experiment.get("seed"), raw.experiment.line_of("seed"));

  check_keys(raw.dataset,
             {"kind", "train", "test", "dim", "classes", "spread", "train_images",
              "train_labels", "test_images", "test_labels", "train_take", "test_take"},
             "dataset");
  const Section& d = raw.dataset;
  if (d.has("kind")) spec.dataset.kind = d.get("kind");
  if (spec.dataset.kind != "blobs" && spec.dataset.kind != "idx")
    throw SpecParseError(d.has("kind") ? d.line_of("kind") : d.line,
                         "dataset kind must be 'blobs' or 'idx'");
  if (d.has("train")) spec.dataset.train_examples = parse_u64(d.get("train"), d.line_of("train"));
  if (d.has("test")) spec.dataset.test_examples = parse_u64(d.get("test"), d.line_of("test"));
  if (d.has("dim")) spec.dataset.dim = parse_u64(d.get("dim"), d.line_of("dim"));
  if (d.has("classes")) spec.dataset.classes = parse_int(d.get("classes"), d.line_of("classes"));
  if (d.has("spread")) spec.dataset.spread = parse_double(d.get("spread"), d.line_of("spread"));
  if (d.has("train_images")) spec.dataset.train_images = d.get("train_images");
  if (d.has("train_labels")) spec.dataset.train_labels = d.get("train_labels");
  if (d.has("test_images")) spec.dataset.test_images = d.get("test_images");
  if (d.has("test_labels")) spec.dataset.test_labels = d.get("test_labels");
  if (d.has("train_take")) spec.dataset.train_take = parse_u64(d.get("train_take"), d.line_of("train_take"));
  if (d.has("test_take")) spec.dataset.test_take = parse_u64(d.get("test_take"), d.line_of("test_take"));
  if (spec.dataset.kind == "idx" &&
      (spec.dataset.train_images.empty() || spec.dataset.train_labels.empty() ||
       spec.dataset.test_images.empty() || spec.dataset.test_labels.empty()))
    throw SpecParseError(d.line, "idx datasets need train/test image and label paths");

  check_keys(raw.model, {"kind", "hidden"}, "model");
  if (raw.model.has("kind")) spec.model.kind = raw.model.get("kind");
  if (spec.model.kind != "logistic" && spec.model.kind != "mlp")
    throw SpecParseError(raw.model.has("kind") ? raw.model.line_of("kind") : raw.model.line,
                         "model kind must be 'logistic' or 'mlp'");
  if (raw.model.has("hidden")) {
    for (double h : parse_double_list(raw.model.get("hidden"), raw.model.line_of("hidden"))) {
      if (h < 1.0 || h != std::floor(h))
        throw SpecParseError(raw.model.line_of("hidden"), "hidden sizes must be positive integers");
      spec.model.hidden.push_back(static_cast<std::size_t>(h));
    }
  }
  if (spec.model.kind == "logistic" && !spec.model.hidden.empty())
    throw SpecParseError(raw.model.line_of("hidden"), "logistic models take no hidden sizes");

  if (raw.defaults.has("seed"))
    throw SpecParseError(raw.defaults.line_of("seed"),
                         "seed belongs in [experiment] or an [arm] section");
  if (raw.arms.empty()) throw SpecParseError(0, "spec declares no [arm ...] sections");
  for (const auto& [name, section] : raw.arms) {
    fed::FederationConfig cfg;
    cfg.seed = spec.seed;
    apply_arm_keys(cfg, raw.defaults, "defaults");
    apply_arm_keys(cfg, section, "arm " + name);
    if (!section.has("mechanism") && !raw.defaults.has("mechanism"))
      throw SpecParseError(section.line, "arm '" + name + "' does not set a mechanism");
    spec.arms.emplace_back(name, std::move(cfg));
  }
  return spec;
}

std::pair<data::Dataset, data::Dataset> build_datasets(const DatasetSpec& spec,
                                                       std::uint64_t seed) {
  if (spec.kind == "blobs") {
    // One draw, then split, so train and test share class centers.
    data::Dataset all =
        data::synthetic_blobs(spec.train_examples + spec.test_examples, spec.dim, spec.classes,
                              spec.spread, derive_seed(seed, kStreamDataset));
    return data::split_at(all, spec.train_examples);
  }
  data::Dataset train = data::load_idx(spec.train_images, spec.train_labels);
  data::Dataset test = data::load_idx(spec.test_images, spec.test_labels);
  if (spec.train_take > 0) train = data::take_prefix(train, spec.train_take);
  if (spec.test_take > 0) test = data::take_prefix(test, spec.test_take);
  // Prefixes may miss classes; align both splits on the declared range.
  int classes = std::max(train.class_count, test.class_count);
  train.class_count = classes;
  test.class_count = classes;
  return {std::move(train), std::move(test)};
}

std::string metrics_csv_header() {
  return "round,train_loss,test_accuracy,epsilon_spent,sampled_clients";
}

namespace {

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

} // namespace

std::string format_metrics_row(const fed::RoundMetrics& m) {
  std::ostringstream os;
  os << m.round << ',' << format_double(m.train_loss) << ',' << format_double(m.test_accuracy)
     << ',' << format_double(m.epsilon_spent) << ',' << m.sampled_client_count;
  return os.str();
}

namespace {

void write_atomically(const fs::path& target, const std::string& content) {
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.good()) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

json clip_to_json(const fed::FederationConfig& cfg, const fed::RunInfo& info) {
  json j;
  j["mode"] = cfg.clip.use_median ? "median" : "fixed";
  if (cfg.clip.use_median) {
    j["proxy_count"] = cfg.clip.median_proxy_count;
    j["space"] =
        cfg.mechanism == fed::Mechanism::DpSgdWav ? "coefficient" : "element";
  }
  if (info.resolved_clip.kind == mech::ClippingPolicy::Kind::Flat) {
    j["resolved_c"] = info.resolved_clip.c;
  } else {
    j["resolved_per_layer"] = info.resolved_clip.per_layer;
  }
  return j;
}

json manifest_json(const std::string& arm, const ExperimentSpec& spec,
                   const fed::FederationConfig& cfg, const fed::RunInfo& info) {
  json j;
  j["arm"] = arm;
  j["mechanism"] = fed::mechanism_name(cfg.mechanism);
  j["seed"] = cfg.seed;
  j["dataset"] = {{"kind", spec.dataset.kind}};
  if (spec.dataset.kind == "blobs") {
    j["dataset"]["train"] = spec.dataset.train_examples;
    j["dataset"]["test"] = spec.dataset.test_examples;
    j["dataset"]["dim"] = spec.dataset.dim;
    j["dataset"]["classes"] = spec.dataset.classes;
    j["dataset"]["spread"] = spec.dataset.spread;
  } else {
    j["dataset"]["train_images"] = spec.dataset.train_images;
    j["dataset"]["train_labels"] = spec.dataset.train_labels;
    j["dataset"]["test_images"] = spec.dataset.test_images;
    j["dataset"]["test_labels"] = spec.dataset.test_labels;
    j["dataset"]["train_take"] = spec.dataset.train_take;
    j["dataset"]["test_take"] = spec.dataset.test_take;
  }
  j["model"] = {{"kind", spec.model.kind}, {"dims", cfg.model_dims}};
  j["federation"] = {{"clients", cfg.total_clients},
                     {"client_sampling", cfg.client_sampling},
                     {"rounds", cfg.rounds},
                     {"local_iterations", cfg.local_iterations},
                     {"lot_size", cfg.lot_size},
                     {"delta", cfg.delta}};
  const char* opt = cfg.optimizer.rule == models::OptimizerState::Rule::Sgd ? "sgd"
                    : cfg.optimizer.rule == models::OptimizerState::Rule::Adam ? "adam"
                                                                               : "adagrad";
  j["optimizer"] = {{"rule", opt}, {"learning_rate", cfg.optimizer.learning_rate}};
  j["clip"] = clip_to_json(cfg, info);
  j["sensitivity"] = info.sensitivity;
  j["noise"] = {{"sigma_config", info.noise.sigma_config},
                {"sigma_is_effective", cfg.sigma_is_effective},
                {"sigma_haar", info.noise.sigma_haar},
                {"sigma_accounting", info.noise.sigma_accounting},
                {"wavelet_m", info.noise.wavelet_m}};
  j["accounting"] = {{"mode", info.accounting},
                     {"q", info.accounting_q},
                     {"steps_per_round", info.accounting_steps_per_round},
                     {"orders", rdp::default_orders()}};
  j["param_count"] = info.param_count;
  json order = json::array();
  for (const auto& [name, size] : info.flatten_order)
    order.push_back({{"name", name}, {"size", size}});
  j["flatten_order"] = std::move(order);
  return j;
}

void run_single_arm(const ExperimentSpec& spec, const std::string& name,
                    fed::FederationConfig cfg, const data::Dataset& train,
                    const data::Dataset& test, const fs::path& out_root) {
  auto [metrics, info] = fed::run(cfg, train, test);

  fs::path arm_dir = out_root / name;
  fs::create_directories(arm_dir);

  std::ostringstream csv;
  csv << metrics_csv_header() << '\n';
  for (const auto& m : metrics) csv << format_metrics_row(m) << '\n';
  write_atomically(arm_dir / "metrics.csv", csv.str());

  write_atomically(arm_dir / "manifest.json", manifest_json(name, spec, cfg, info).dump(2) + "\n");
}

} // namespace

int run_experiment(const std::string& spec_path, const std::string& out_override,
                   bool parallel, std::ostream& err) {
  ExperimentSpec spec;
  try {
    spec = parse_spec_file(spec_path);
  } catch (const SpecParseError& e) {
    if (e.line > 0)
      err << spec_path << ":" << e.line << ": " << e.what() << "\n";
    else
      err << spec_path << ": " << e.what() << "\n";
    return 1;
  }
  if (!out_override.empty()) spec.out_dir = out_override;

  try {
    auto [train, test] = build_datasets(spec.dataset, spec.seed);

    std::vector<std::size_t> dims;
    dims.push_back(train.dim);
    for (std::size_t h : spec.model.hidden) dims.push_back(h);
    dims.push_back(static_cast<std::size_t>(train.class_count));
    for (auto& [name, cfg] : spec.arms) cfg.model_dims = dims;

    fs::path out_root(spec.out_dir);
    fs::create_directories(out_root);

    if (parallel && spec.arms.size() > 1) {
      std::vector<std::thread> workers;
      std::vector<std::exception_ptr> failures(spec.arms.size());
      for (std::size_t i = 0; i < spec.arms.size(); ++i) {
        workers.emplace_back([&, i] {
          try {
            run_single_arm(spec, spec.arms[i].first, spec.arms[i].second, train, test, out_root);
          } catch (...) {
            failures[i] = std::current_exception();
          }
        });
      }
      for (auto& w : workers) w.join();
      for (auto& f : failures)
        if (f) std::rethrow_exception(f);
    } else {
      for (const auto& [name, cfg] : spec.arms) {
        if (log_enabled()) err << "running arm " << name << "\n";
        run_single_arm(spec, name, cfg, train, test, out_root);
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

namespace {

// Final test_accuracy from a metrics.csv (third column of the last row).
double final_accuracy(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open " + csv_path.string());
  std::string line, last;
  std::getline(in, line); // header
  if (line.rfind("round,", 0) != 0)
    throw std::runtime_error("not a metrics file: " + csv_path.string());
  while (std::getline(in, line))
    if (!trim(line).empty()) last = line;
  if (last.empty()) throw std::runtime_error("no data rows in " + csv_path.string());
  std::stringstream ss(last);
  std::string cell;
  for (int i = 0; i < 3; ++i)
    if (!std::getline(ss, cell, ',')) throw std::runtime_error("malformed row in " + csv_path.string());
  return std::stod(cell);
}

} // namespace

int report_compare(const std::vector<std::string>& metrics_dirs, std::ostream& out,
                   std::ostream& err) {
  if (metrics_dirs.size() < 2) {
    err << "compare needs at least two metrics directories\n";
    return 1;
  }
  struct Entry {
    std::string name;
    double accuracy;
  };
  std::vector<Entry> entries;
  try {
    for (const auto& dir : metrics_dirs) {
      fs::path p(dir);
      if (!p.has_filename()) p = p.parent_path(); // tolerate trailing slash
      fs::path csv = fs::is_directory(p) ? p / "metrics.csv" : p;
      std::string name = fs::is_directory(p) ? p.filename().string()
                                             : p.parent_path().filename().string();
      if (name.empty()) name = dir;
      entries.push_back({name, final_accuracy(csv)});
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  out << "arm,final_accuracy\n";
  for (const auto& e : entries) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", e.accuracy);
    out << e.name << "," << buf << "\n";
  }
  out << "\npairwise deltas (percentage points):\n";
  for (std::size_t i = 0; i < entries.size(); ++i)
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      double delta_pp = (entries[j].accuracy - entries[i].accuracy) * 100.0;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%+.1f", delta_pp);
      out << entries[j].name << " vs " << entries[i].name << ": " << buf << " pp\n";
    }
  return 0;
}

} // namespace dpwav::cli
