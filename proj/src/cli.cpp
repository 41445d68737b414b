#include "fairlab/cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fairlab/evaluation.hpp"
#include "fairlab/text.hpp"
#include "fairlab/training.hpp"

namespace fairlab::cli {

namespace fs = std::filesystem;
using data::Dataset;
using data::Split;

// --- generator specs ---------------------------------------------------------

namespace {

std::string_view to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::Classification: return "classification";
    case GeneratorKind::Retrieval: return "retrieval";
    case GeneratorKind::Gerrymander: return "gerrymander";
  }
  return "?";
}

[[noreturn]] void bad_key(std::string_view where, std::string_view key, const std::string& why) {
  throw ConfigError(std::string(where) + ": key '" + std::string(key) + "': " + why);
}

std::size_t to_count(std::string_view v, std::string_view key) {
  const long long n = text::parse_int(v, key);
  if (n < 0) throw DataError("value for " + std::string(key) + " must be non-negative");
  return static_cast<std::size_t>(n);
}

std::uint64_t to_seed(std::string_view v, std::string_view key) {
  std::uint64_t s = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw DataError("value for " + std::string(key) + " must be an unsigned integer");
  }
  return s;
}

std::string read_file(const fs::path& p, std::string_view what) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + std::string(what) + " '" + p.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, std::string_view content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  out << content;
  out.close();
  if (!out) throw DataError("failed writing '" + p.string() + "'");
}

void make_run_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory '" + dir.string() + "'");
}

}  // namespace

std::string serialize(const GeneratorSpec& s) {
  using text::format_double;
  std::ostringstream o;
  o << "version = 1\n";
  o << "kind = " << to_string(s.kind) << '\n';
  switch (s.kind) {
    case GeneratorKind::Classification:
      o << "dim = " << s.dim << '\n';
      o << "separation = " << format_double(s.separation) << '\n';
      o << "group_shift = " << format_double(s.group_shift) << '\n';
      o << "sigma = " << format_double(s.sigma) << '\n';
      o << "p_a1 = " << format_double(s.p_a1) << '\n';
      o << "p_g1 = " << format_double(s.p_g1) << '\n';
      o << "p_y1 = " << format_double(s.p_y1) << '\n';
      o << "noise_a0 = " << format_double(s.label_noise[0]) << '\n';
      o << "noise_a1 = " << format_double(s.label_noise[1]) << '\n';
      o << "n_train = " << s.n_train << '\n';
      o << "n_holdout = " << s.n_holdout << '\n';
      o << "n_val = " << s.n_val << '\n';
      o << "n_test = " << s.n_test << '\n';
      break;
    case GeneratorKind::Retrieval: {
      const auto& r = s.retrieval;
      o << "dim = " << r.dim << '\n';
      o << "identities = " << r.identities << '\n';
      o << "images_per_identity = " << r.images_per_identity << '\n';
      o << "p_a1 = " << format_double(r.p_a1) << '\n';
      o << "center_scale = " << format_double(r.center_scale) << '\n';
      o << "spread_a0 = " << format_double(r.spread[0]) << '\n';
      o << "spread_a1 = " << format_double(r.spread[1]) << '\n';
      o << "group_shift = " << format_double(r.group_shift) << '\n';
      o << "test_identity_fraction = " << format_double(r.test_identity_fraction) << '\n';
      o << "val_per_identity = " << r.val_per_identity << '\n';
      break;
    }
    case GeneratorKind::Gerrymander: break;
  }
  o << "seed = " << s.seed << '\n';
  return o.str();
}

GeneratorSpec parse_generator_spec(std::string_view text_in, std::string_view source) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::map<std::string, std::size_t> line_of;
  std::size_t line_no = 0;
  for (auto line : text::split(text_in, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key(text::trim(line.substr(0, eq)));
    if (line_of.contains(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    line_of[key] = line_no;
    kv.emplace_back(std::move(key), std::string(text::trim(line.substr(eq + 1))));
  }
  if (!line_of.contains("version")) throw ConfigError(std::string(source) + ": missing 'version' key");
  if (!line_of.contains("kind")) throw ConfigError(std::string(source) + ": missing 'kind' key");

  GeneratorSpec s;
  for (const auto& [key, value] : kv) {
    if (key != "kind") continue;
    if (value == "classification")
      s.kind = GeneratorKind::Classification;
    else if (value == "retrieval")
      s.kind = GeneratorKind::Retrieval;
    else if (value == "gerrymander")
      s.kind = GeneratorKind::Gerrymander;
    else
      bad_key(std::string(source) + ":" + std::to_string(line_of[key]), key,
              "expected classification, retrieval or gerrymander");
  }
  auto& r = s.retrieval;
  for (const auto& [key, value] : kv) {
    const std::string where = std::string(source) + ":" + std::to_string(line_of[key]);
    const std::string_view v = value;
    bool known = true;
    try {
      if (key == "version") {
        if (text::parse_int(v, key) != 1) bad_key(where, key, "unsupported version " + value);
      } else if (key == "kind") {
      } else if (key == "seed") {
        s.seed = to_seed(v, key);
      } else if (s.kind == GeneratorKind::Classification) {
        if (key == "dim") s.dim = to_count(v, key);
        else if (key == "separation") s.separation = text::parse_double(v, key);
        else if (key == "group_shift") s.group_shift = text::parse_double(v, key);
        else if (key == "sigma") s.sigma = text::parse_double(v, key);
        else if (key == "p_a1") s.p_a1 = text::parse_double(v, key);
        else if (key == "p_g1") s.p_g1 = text::parse_double(v, key);
        else if (key == "p_y1") s.p_y1 = text::parse_double(v, key);
        else if (key == "noise_a0") s.label_noise[0] = text::parse_double(v, key);
        else if (key == "noise_a1") s.label_noise[1] = text::parse_double(v, key);
        else if (key == "n_train") s.n_train = to_count(v, key);
        else if (key == "n_holdout") s.n_holdout = to_count(v, key);
        else if (key == "n_val") s.n_val = to_count(v, key);
        else if (key == "n_test") s.n_test = to_count(v, key);
        else known = false;
      } else if (s.kind == GeneratorKind::Retrieval) {
        if (key == "dim") r.dim = to_count(v, key);
        else if (key == "identities") r.identities = to_count(v, key);
        else if (key == "images_per_identity") r.images_per_identity = to_count(v, key);
        else if (key == "p_a1") r.p_a1 = text::parse_double(v, key);
        else if (key == "center_scale") r.center_scale = text::parse_double(v, key);
        else if (key == "spread_a0") r.spread[0] = text::parse_double(v, key);
        else if (key == "spread_a1") r.spread[1] = text::parse_double(v, key);
        else if (key == "group_shift") r.group_shift = text::parse_double(v, key);
        else if (key == "test_identity_fraction") r.test_identity_fraction = text::parse_double(v, key);
        else if (key == "val_per_identity") r.val_per_identity = to_count(v, key);
        else known = false;
      } else {
        known = false;
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(where + ": " + e.what());
    }
    if (!known) bad_key(where, key, "unknown for kind = " + std::string(to_string(s.kind)));
  }
  r.seed = s.seed;
  return s;
}

Dataset generate(const GeneratorSpec& s) {
  switch (s.kind) {
    case GeneratorKind::Classification: {
      auto spec = data::default_classification_spec(s.dim, s.separation, s.group_shift, s.sigma);
      spec.group_proportions = {1.0 - s.p_a1, s.p_a1};
      spec.p_g1 = s.p_g1;
      spec.p_y1 = s.p_y1;
      spec.label_noise = s.label_noise;
      spec.n_train = s.n_train;
      spec.n_holdout = s.n_holdout;
      spec.n_val = s.n_val;
      spec.n_test = s.n_test;
      spec.seed = s.seed;
      return data::generate_classification(spec);
    }
    case GeneratorKind::Retrieval: {
      auto spec = s.retrieval;
      spec.seed = s.seed;
      return data::generate_retrieval(spec);
    }
    case GeneratorKind::Gerrymander: return data::generate_gerrymander_scenario(s.seed);
  }
  throw ConfigError("unknown generator kind");
}

// --- presets -----------------------------------------------------------------

std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::OverfitDemo: return "overfit-demo";
    case Preset::HoldoutDemo: return "holdout-demo";
    case Preset::GerrymanderDemo: return "gerrymander-demo";
    case Preset::AdversarialDemo: return "adversarial-demo";
    case Preset::FlipDemo: return "flip-demo";
  }
  return "?";
}

std::vector<Preset> all_presets() {
  return {Preset::OverfitDemo, Preset::HoldoutDemo, Preset::GerrymanderDemo, Preset::AdversarialDemo,
          Preset::FlipDemo};
}

Preset parse_preset(std::string_view s) {
  for (auto p : all_presets())
    if (to_string(p) == s) return p;
  throw ConfigError("unknown preset '" + std::string(s) +
                    "' (expected overfit-demo, holdout-demo, gerrymander-demo, adversarial-demo or flip-demo)");
}

namespace {

constexpr std::uint64_t kPresetSeed = 1;

}  // namespace

GeneratorSpec preset_data_spec(Preset p) {
  GeneratorSpec s;
  s.seed = kPresetSeed;
  switch (p) {
    case Preset::OverfitDemo:
    case Preset::HoldoutDemo:
    case Preset::FlipDemo:
      s.kind = GeneratorKind::Classification;
      s.dim = 20;
      s.separation = 2.0;
      s.group_shift = 1.0;
      s.sigma = 1.0;
      s.label_noise = {0.05, 0.2};
      s.n_train = p == Preset::HoldoutDemo ? 400 : 300;
      s.n_val = p == Preset::FlipDemo ? 1000 : 0;
      s.n_test = 2000;
      break;
    case Preset::GerrymanderDemo: s.kind = GeneratorKind::Gerrymander; break;
    case Preset::AdversarialDemo:
      s.kind = GeneratorKind::Retrieval;
      s.retrieval.dim = 32;
      s.retrieval.identities = 100;
      s.retrieval.images_per_identity = 10;
      s.retrieval.p_a1 = 0.6;
      s.retrieval.spread = {4.0, 3.2};
      s.retrieval.group_shift = 4.0;
      s.retrieval.seed = s.seed;
      break;
  }
  return s;
}

// --- manifests ---------------------------------------------------------------

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string file_hash(const fs::path& p) { return text::hex64(text::fnv1a(read_file(p, "artifact"))); }

}  // namespace

void write_manifest(RunManifest m, const fs::path& run_dir) {
  nlohmann::ordered_json j;
  j["tool"] = "fairlab";
  j["tool_version"] = m.tool_version;
  j["command"] = m.command;
  j["config_file"] = m.config_file;
  if (!m.config_file.empty()) m.config_hash = file_hash(run_dir / m.config_file);
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  nlohmann::ordered_json arts = nlohmann::ordered_json::object();
  m.artifact_hashes.clear();
  for (const auto& [name, rel] : m.artifacts) {
    const fs::path full = run_dir / rel;
    if (!fs::is_regular_file(full)) throw DataError("artifact '" + full.string() + "' was not written");
    const auto h = file_hash(full);
    m.artifact_hashes.emplace_back(name, h);
    arts[name] = {{"path", rel}, {"fnv1a", h}};
  }
  j["artifacts"] = arts;
  j["created_utc"] = m.created_utc.empty() ? utc_now() : m.created_utc;
  write_file(run_dir / "manifest.json", j.dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& run_dir) {
  const fs::path p = run_dir / "manifest.json";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(p, "manifest"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest '" + p.string() + "': " + e.what());
  }
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_file = j.at("config_file").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [name, v] : j.at("artifacts").items()) {
      m.artifacts.emplace_back(name, v.at("path").get<std::string>());
      m.artifact_hashes.emplace_back(name, v.at("fnv1a").get<std::string>());
    }
    m.created_utc = j.at("created_utc").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + p.string() + "' is missing a field: " + e.what());
  }
  return m;
}

fs::path resolve_data_path(const fs::path& p) {
  if (fs::is_directory(p)) {
    const fs::path csv = p / "data.csv";
    if (!fs::is_regular_file(csv)) throw DataError("data directory '" + p.string() + "' has no data.csv");
    return csv;
  }
  if (!fs::is_regular_file(p)) throw DataError("data file '" + p.string() + "' does not exist");
  return p;
}

// --- commands ----------------------------------------------------------------

namespace {

void save_dataset_run(const Dataset& d, const GeneratorSpec& spec, const fs::path& out_dir) {
  make_run_dir(out_dir);
  write_file(out_dir / "generator.txt", serialize(spec));
  data::save_csv(d, out_dir / "data.csv");
  // Validate by reading back.
  if (data::load_csv(out_dir / "data.csv") != d) throw DataError("data.csv did not round-trip in '" + out_dir.string() + "'");
  RunManifest m;
  m.command = "generate";
  m.config_file = "generator.txt";
  m.seed = spec.seed;
  m.artifacts = {{"data", "data.csv"}, {"generator", "generator.txt"}};
  write_manifest(m, out_dir);
}

void write_reports(const std::vector<metrics::GroupReport>& reports, const fs::path& out_dir,
                   std::vector<std::pair<std::string, std::string>>& artifacts) {
  std::ostringstream table;
  eval::write_report_table(reports, table);
  write_file(out_dir / "report.txt", table.str());
  artifacts.emplace_back("report", "report.txt");
  for (const auto& r : reports) {
    std::ostringstream csv;
    eval::write_report_csv(r, csv);
    const std::string name = "report_" + r.split + ".csv";
    write_file(out_dir / name, csv.str());
    artifacts.emplace_back("report_" + r.split, name);
  }
}

struct TrainRun {
  models::AnyModel model;
  train::TrainHistory history;
  Dataset data;
};

TrainRun train_run(const train::ExperimentConfig& config, const Dataset& d, const fs::path& out_dir,
                   const std::optional<fs::path>& pretrained) {
  make_run_dir(out_dir);
  TrainRun run;
  if (config.objective.kind == objectives::ObjectiveKind::Adversarial) {
    if (!pretrained) throw ConfigError("objective = adversarial needs --pretrained CHECKPOINT (an embedding model)");
    const auto base = models::load_checkpoint(*pretrained);
    const auto* emb = std::get_if<models::EmbeddingModel>(&base);
    if (!emb) throw ConfigError("pretrained checkpoint '" + pretrained->string() + "' is not an embedding model");
    auto res = train::train_adversarial(config, d, *emb);
    run = {res.model, std::move(res.history), d};
  } else {
    if (pretrained) throw ConfigError("--pretrained is only used with objective = adversarial");
    auto res = train::train(config, d);
    run = {std::move(res.model), std::move(res.history), std::move(res.data)};
  }
  train::save_config(config, out_dir / "config.txt");
  models::save_checkpoint(run.model, out_dir / "checkpoint.txt");
  if (models::load_checkpoint(out_dir / "checkpoint.txt") != run.model) {
    throw DataError("checkpoint did not round-trip in '" + out_dir.string() + "'");
  }
  std::ostringstream hist;
  run.history.write_csv(hist);
  write_file(out_dir / "history.csv", hist.str());
  data::save_csv(run.data, out_dir / "data.csv");

  RunManifest m;
  m.command = "train";
  m.config_file = "config.txt";
  m.seed = config.seed;
  m.artifacts = {{"checkpoint", "checkpoint.txt"}, {"history", "history.csv"}, {"config", "config.txt"},
                 {"data", "data.csv"}};
  write_manifest(m, out_dir);
  return run;
}

std::vector<metrics::GroupReport> evaluate_run(const models::AnyModel& model, const Dataset& d,
                                               const eval::LossSpec& loss, const fs::path& out_dir,
                                               const std::string& inputs) {
  make_run_dir(out_dir);
  const auto reports = eval::evaluate_all(model, d, loss);
  RunManifest m;
  m.command = "evaluate";
  write_file(out_dir / "inputs.txt", inputs);
  m.config_file = "inputs.txt";
  write_reports(reports, out_dir, m.artifacts);
  write_manifest(m, out_dir);
  return reports;
}

std::vector<int> column(const std::vector<int>& v, const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

metrics::GerrymanderReport audit_run(const models::AnyModel& base, const models::AnyModel& fair, const Dataset& d,
                                     Split split, const fs::path& out_dir, const std::string& inputs) {
  if (!d.has_g()) {
    throw DataError("audit unavailable: the dataset has no secondary attribute column 'g'");
  }
  const auto* b = std::get_if<models::Mlp>(&base);
  const auto* f = std::get_if<models::Mlp>(&fair);
  if (!b || !f) throw ConfigError("audit needs two classifier (mlp) checkpoints");
  if (d.task != data::TaskKind::Binary) throw DataError("audit needs binary labels");
  if (!d.has_split(split)) throw DataError("dataset has no '" + std::string(data::to_string(split)) + "' split");
  make_run_dir(out_dir);
  const auto rows = d.indices(split);
  std::vector<int> y;
  for (auto r : rows) y.push_back(d.label(r));
  const auto rep = metrics::gerrymander_audit(eval::binary_scores(*b, d, split), eval::binary_scores(*f, d, split), y,
                                              column(d.a, rows), column(d.g, rows));
  std::ostringstream t, c, k;
  eval::write_audit_table(rep, t);
  eval::write_audit_csv(rep, c);
  eval::write_bucket_csv(rep, k);
  write_file(out_dir / "audit.txt", t.str());
  write_file(out_dir / "audit.csv", c.str());
  write_file(out_dir / "buckets.csv", k.str());
  write_file(out_dir / "inputs.txt", inputs);
  RunManifest m;
  m.command = "audit";
  m.config_file = "inputs.txt";
  m.artifacts = {{"audit", "audit.txt"}, {"audit_csv", "audit.csv"}, {"buckets", "buckets.csv"}};
  write_manifest(m, out_dir);
  return rep;
}

std::string describe_inputs(const std::vector<std::pair<std::string, fs::path>>& files) {
  std::ostringstream o;
  for (const auto& [name, p] : files) o << name << " = " << file_hash(p) << '\n';
  return o.str();
}

}  // namespace

void cmd_generate(const std::optional<fs::path>& spec_file, std::optional<Preset> preset,
                  std::optional<std::uint64_t> seed, const fs::path& out_dir) {
  if (spec_file.has_value() == preset.has_value()) throw ConfigError("generate needs exactly one of --config or --preset");
  GeneratorSpec spec = preset ? preset_data_spec(*preset)
                              : parse_generator_spec(read_file(*spec_file, "generator spec"), spec_file->string());
  if (seed) spec.seed = *seed;
  spec.retrieval.seed = spec.seed;
  save_dataset_run(generate(spec), spec, out_dir);
}

void cmd_train(const fs::path& config_file, const fs::path& data, const fs::path& out_dir,
               std::optional<std::uint64_t> seed, const std::optional<fs::path>& pretrained) {
  auto config = train::load_config(config_file);
  if (seed) config.seed = *seed;
  const Dataset d = data::load_csv(resolve_data_path(data));
  train_run(config, d, out_dir, pretrained);
}

void cmd_evaluate(const fs::path& checkpoint, const fs::path& data, const fs::path& out_dir,
                  const std::optional<fs::path>& config_file) {
  const auto model = models::load_checkpoint(checkpoint);
  const auto data_path = resolve_data_path(data);
  const Dataset d = data::load_csv(data_path);
  eval::LossSpec loss;
  std::vector<std::pair<std::string, fs::path>> inputs{{"checkpoint", checkpoint}, {"data", data_path}};
  if (config_file) {
    loss = train::load_config(*config_file).loss_spec(d);
    inputs.emplace_back("config", *config_file);
  }
  evaluate_run(model, d, loss, out_dir, describe_inputs(inputs));
}

void cmd_audit(const fs::path& baseline_checkpoint, const fs::path& fair_checkpoint, const fs::path& data,
               const fs::path& out_dir, Split split) {
  const auto base = models::load_checkpoint(baseline_checkpoint);
  const auto fair = models::load_checkpoint(fair_checkpoint);
  const auto data_path = resolve_data_path(data);
  const Dataset d = data::load_csv(data_path);
  audit_run(base, fair, d, split, out_dir,
            describe_inputs({{"baseline", baseline_checkpoint}, {"fair", fair_checkpoint}, {"data", data_path}}));
}

double PresetSummary::value(std::string_view name) const {
  for (const auto& [k, v] : values)
    if (k == name) return v;
  throw DataError("preset summary has no value '" + std::string(name) + "'");
}

// --- preset pipelines --------------------------------------------------------

namespace {

using objectives::ObjectiveKind;

train::ExperimentConfig classifier_config(std::uint64_t seed) {
  train::ExperimentConfig c;
  c.model = train::ModelKind::Mlp;
  c.seed = seed;
  return c;
}

const metrics::GroupReport& report_for(const std::vector<metrics::GroupReport>& reps, Split s) {
  for (const auto& r : reps)
    if (r.split == data::to_string(s)) return r;
  throw DataError("missing report for split '" + std::string(data::to_string(s)) + "'");
}

struct Pipeline {
  fs::path root;
  std::uint64_t seed;
  Dataset data;
  PresetSummary summary;

  void add(std::string name, double v) { summary.values.emplace_back(std::move(name), v); }

  TrainRun train(const std::string& name, const train::ExperimentConfig& c,
                 const std::optional<fs::path>& pretrained = std::nullopt) {
    make_run_dir(root / "configs");
    train::save_config(c, root / "configs" / (name + ".txt"));
    return train_run(c, data, root / name, pretrained);
  }

  std::vector<metrics::GroupReport> evaluate(const std::string& name, const TrainRun& run,
                                             const train::ExperimentConfig& c) {
    const fs::path dir = root / name;
    return evaluate_run(run.model, run.data, c.loss_spec(run.data), root / (name + "-eval"),
                        describe_inputs({{"checkpoint", dir / "checkpoint.txt"}, {"data", dir / "data.csv"}}));
  }
};

void overfit_demo(Pipeline& p) {
  auto base = classifier_config(p.seed);
  base.hidden = {512};
  base.epochs = 150;
  base.batch_size = 50;
  base.optimizer.learning_rate = 0.05;
  base.optimizer.weight_decay = 0.0;
  auto fair = base;
  fair.objective.kind = ObjectiveKind::EqualLoss;
  fair.objective.alpha = 1.0;

  p.add("hidden_width", 512);
  p.add("n_train", static_cast<double>(p.data.indices(Split::Train).size()));
  std::map<std::string, std::vector<metrics::GroupReport>> reps;
  for (const auto& [name, cfg] : {std::pair{"baseline", base}, std::pair{"fair", fair}}) {
    const auto run = p.train(name, cfg);
    reps[name] = p.evaluate(name, run, cfg);
  }
  for (const char* name : {"baseline", "fair"}) {
    const auto& tr = report_for(reps[name], Split::Train);
    const auto& te = report_for(reps[name], Split::Test);
    p.add(std::string(name) + "_train_loss_gap", tr.row("loss").abs_gap);
    p.add(std::string(name) + "_train_accuracy_gap", tr.row("accuracy").abs_gap);
    p.add(std::string(name) + "_test_accuracy_gap", te.row("accuracy").abs_gap);
    p.add(std::string(name) + "_test_accuracy", te.row("accuracy").overall);
  }
  p.add("test_gap_retained", p.summary.value("fair_test_accuracy_gap") / p.summary.value("baseline_test_accuracy_gap"));
}

void holdout_demo(Pipeline& p) {
  auto base = classifier_config(p.seed);
  base.hidden = {512};
  base.epochs = 150;
  base.batch_size = 50;
  base.optimizer.weight_decay = 0.0;
  auto on_train = base;
  on_train.objective.kind = ObjectiveKind::EqualLoss;
  on_train.objective.alpha = 1.0;
  auto on_holdout = on_train;
  on_holdout.objective.penalty_split = objectives::PenaltySplit::Holdout;

  for (const auto& [name, cfg] :
       {std::pair{"baseline", base}, std::pair{"penalty-train", on_train}, std::pair{"penalty-holdout", on_holdout}}) {
    const auto run = p.train(name, cfg);
    const auto reps = p.evaluate(name, run, cfg);
    p.add(std::string(name) + "_train_loss_gap", report_for(reps, Split::Train).row("loss").abs_gap);
    p.add(std::string(name) + "_test_accuracy_gap", report_for(reps, Split::Test).row("accuracy").abs_gap);
    p.add(std::string(name) + "_test_accuracy", report_for(reps, Split::Test).row("accuracy").overall);
    if (cfg.objective.penalty_split == objectives::PenaltySplit::Holdout) {
      p.add("holdout_loss_gap_first_epoch", run.history.epochs.front().loss_gap);
      p.add("holdout_loss_gap_last_epoch", run.history.epochs.back().loss_gap);
    }
  }
}

void gerrymander_demo(Pipeline& p) {
  auto base = classifier_config(p.seed);
  base.hidden = {};
  base.epochs = 1500;
  base.batch_size = 1000;  // full batch
  base.optimizer.learning_rate = 0.5;
  base.optimizer.momentum = 0.0;
  base.optimizer.weight_decay = 0.0;
  auto fair = base;
  fair.objective.kind = ObjectiveKind::EqualLoss;
  fair.objective.alpha = 0.5;

  const auto b = p.train("baseline", base);
  const auto f = p.train("fair", fair);
  p.evaluate("baseline", b, base);
  p.evaluate("fair", f, fair);
  const auto rep = audit_run(b.model, f.model, p.data, Split::Test, p.root / "audit",
                             describe_inputs({{"baseline", p.root / "baseline" / "checkpoint.txt"},
                                              {"fair", p.root / "fair" / "checkpoint.txt"},
                                              {"data", p.root / "data" / "data.csv"}}));
  p.add("baseline_gap_a", rep.baseline_gap_a);
  p.add("fair_gap_a", rep.fair_gap_a);
  p.add("gap_a_reduction", rep.baseline_gap_a > 0 ? 1.0 - rep.fair_gap_a / rep.baseline_gap_a : 0.0);
  p.add("baseline_disparity_g", rep.baseline_disparity_g);
  p.add("fair_disparity_g", rep.fair_disparity_g);
  for (std::size_t g = 0; g < 2; ++g) {
    p.add("g" + std::to_string(g) + "_correct_to_incorrect", static_cast<double>(rep.flips[g].correct_to_incorrect));
    p.add("g" + std::to_string(g) + "_incorrect_to_correct", static_cast<double>(rep.flips[g].incorrect_to_correct));
  }
  if (rep.flip_test_available) {
    p.add("flip_test_z", rep.flip_test.z);
    p.add("flip_test_p_one_tailed", rep.flip_test.p_value);
  }
}

void adversarial_demo(Pipeline& p) {
  train::ExperimentConfig base;
  base.model = train::ModelKind::Embedding;
  base.hidden = {64};
  base.feature_dim = 16;
  base.margins.scale = 16.0;
  base.margins.margin_per_group = {0.2, 0.2};
  base.epochs = 30;
  base.batch_size = 64;
  base.optimizer.learning_rate = 0.05;
  base.seed = p.seed;
  const auto pre = p.train("pretrained", base);
  const auto pre_reps = p.evaluate("pretrained", pre, base);
  const fs::path pre_ckpt = p.root / "pretrained" / "checkpoint.txt";

  auto adv = base;
  adv.objective.kind = ObjectiveKind::Adversarial;
  adv.epochs = 60;
  adv.focal_gamma = 2.0;
  adv.adversarial.penalized_group = 0;
  adv.adversarial.discriminator_lr = 0.05;
  const int pen = adv.adversarial.penalized_group;

  const auto test_rows = p.data.indices(Split::Test);
  double share1 = 0;
  for (auto r : test_rows) share1 += p.data.a[r];
  share1 /= static_cast<double>(test_rows.size());
  p.add("penalized_group", pen);
  p.add("heldout_majority_rate", std::max(share1, 1.0 - share1));
  const auto rank1_of = [&](const std::vector<metrics::GroupReport>& reps, int grp) {
    const auto& row = report_for(reps, Split::Test).row("rank1");
    return grp == 0 ? row.group0 : row.group1;
  };
  p.add("pretrained_rank1_penalized", rank1_of(pre_reps, pen));
  p.add("pretrained_rank1_other", rank1_of(pre_reps, 1 - pen));
  for (double alpha : {0.0, 20.0}) {
    auto cfg = adv;
    cfg.objective.alpha = alpha;
    const std::string name = alpha == 0.0 ? "removal-alpha0" : "removal-alpha20";
    const auto run = p.train(name, cfg, pre_ckpt);
    const auto reps = p.evaluate(name, run, cfg);
    const std::string tag = alpha == 0.0 ? "alpha0" : "alpha20";
    p.add("disc_accuracy_heldout_" + tag, run.history.epochs.back().discriminator_accuracy_heldout);
    p.add("rank1_penalized_" + tag, rank1_of(reps, pen));
    p.add("rank1_other_" + tag, rank1_of(reps, 1 - pen));
  }
}

void flip_demo(Pipeline& p) {
  auto base = classifier_config(p.seed);
  base.hidden = {64};
  base.epochs = 60;
  base.batch_size = 50;
  const auto b = p.train("baseline", base);
  const auto b_reps = p.evaluate("baseline", b, base);
  const auto& val = report_for(b_reps, Split::Val).row("accuracy");
  const int superior = val.group0 >= val.group1 ? 0 : 1;
  p.add("superior_group", superior);
  p.add("baseline_test_accuracy_gap", report_for(b_reps, Split::Test).row("accuracy").gap);
  for (double frac : {0.1, 0.3, 0.5}) {
    auto cfg = base;
    cfg.flip.mode = train::FlipMode::BinaryFlip;
    cfg.flip.group = superior;
    cfg.flip.fraction = frac;
    cfg.flip.schedule = train::FlipSchedule::PerIteration;
    const std::string name = "flip-" + text::format_double(frac);
    const auto run = p.train(name, cfg);
    const auto reps = p.evaluate(name, run, cfg);
    const auto& te = report_for(reps, Split::Test).row("accuracy");
    p.add("flip_" + text::format_double(frac) + "_test_accuracy_gap", te.gap);
    p.add("flip_" + text::format_double(frac) + "_test_accuracy", te.overall);
  }
}

}  // namespace

PresetSummary cmd_report(Preset preset, const fs::path& out_dir, std::optional<std::uint64_t> seed) {
  make_run_dir(out_dir);
  GeneratorSpec spec = preset_data_spec(preset);
  if (seed) spec.seed = *seed;
  spec.retrieval.seed = spec.seed;
  Pipeline p{out_dir, spec.seed, generate(spec), {std::string(to_string(preset)), {}}};
  save_dataset_run(p.data, spec, out_dir / "data");

  switch (preset) {
    case Preset::OverfitDemo: overfit_demo(p); break;
    case Preset::HoldoutDemo: holdout_demo(p); break;
    case Preset::GerrymanderDemo: gerrymander_demo(p); break;
    case Preset::AdversarialDemo: adversarial_demo(p); break;
    case Preset::FlipDemo: flip_demo(p); break;
  }

  std::ostringstream txt, csv;
  txt << "preset " << to_string(preset) << "\nseed " << p.seed << "\n\n";
  csv << "name,value\n";
  for (const auto& [k, v] : p.summary.values) {
    txt << k << ' ' << text::format_fixed(v, 6) << '\n';
    csv << k << ',' << text::format_double(v) << '\n';
  }
  write_file(out_dir / "summary.txt", txt.str());
  write_file(out_dir / "summary.csv", csv.str());
  std::ostringstream cfg;
  cfg << "preset = " << to_string(preset) << "\nseed = " << p.seed << '\n';
  write_file(out_dir / "preset.txt", cfg.str());
  RunManifest m;
  m.command = "report";
  m.config_file = "preset.txt";
  m.seed = p.seed;
  m.artifacts = {{"summary", "summary.txt"}, {"summary_csv", "summary.csv"}};
  write_manifest(m, out_dir);
  return p.summary;
}

}  // namespace fairlab::cli
