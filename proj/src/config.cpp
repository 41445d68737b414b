#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fairlab/text.hpp"
#include "fairlab/training.hpp"

namespace fairlab::train {

std::string_view to_string(ModelKind k) { return k == ModelKind::Mlp ? "mlp" : "embedding"; }

std::string_view to_string(FlipMode m) {
  switch (m) {
    case FlipMode::None: return "none";
    case FlipMode::BinaryFlip: return "binary_flip";
    case FlipMode::IdentitySwap: return "identity_swap";
  }
  return "?";
}

std::string_view to_string(FlipSchedule s) { return s == FlipSchedule::Once ? "once" : "per_iteration"; }
std::string_view to_string(HoldoutSchedule s) { return s == HoldoutSchedule::Alternate ? "alternate" : "joint"; }

double OptimizerSpec::rate_at(std::size_t epoch) const {
  double lr = learning_rate;
  for (auto e : decay_epochs)
    if (epoch >= e) lr *= decay_factor;
  return lr;
}

namespace {

[[noreturn]] void bad(std::string_view key, const std::string& why) {
  throw ConfigError("config key '" + std::string(key) + "': " + why);
}

void require(bool ok, std::string_view key, const std::string& why) {
  if (!ok) bad(key, why);
}

}  // namespace

void ExperimentConfig::validate() const {
  require(std::isfinite(optimizer.learning_rate) && optimizer.learning_rate >= 0.0, "learning_rate",
          "must be a non-negative number");
  require(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0, "momentum", "must lie in [0, 1)");
  require(optimizer.weight_decay >= 0.0 && std::isfinite(optimizer.weight_decay), "weight_decay", "must be >= 0");
  require(optimizer.decay_factor > 0.0 && optimizer.decay_factor <= 1.0, "decay_factor", "must lie in (0, 1]");
  require(batch_size >= 1, "batch_size", "must be at least 1");
  require(std::isfinite(objective.alpha) && objective.alpha >= 0.0, "alpha", "must be a non-negative number");
  require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "holdout_fraction", "must lie in (0, 1)");
  require(focal_gamma >= 0.0 && std::isfinite(focal_gamma), "focal_gamma", "must be >= 0");
  require(flip.fraction >= 0.0 && flip.fraction <= 1.0, "flip_fraction", "must lie in [0, 1]");
  require(flip.group == 0 || flip.group == 1, "flip_group", "must be 0 or 1");
  require(adversarial.penalized_group == 0 || adversarial.penalized_group == 1, "adv_group", "must be 0 or 1");
  require(adversarial.discriminator_hidden >= 1, "adv_discriminator_hidden", "must be at least 1");
  require(adversarial.discriminator_lr >= 0.0 && std::isfinite(adversarial.discriminator_lr),
          "adv_discriminator_lr", "must be >= 0");
  for (auto h : hidden) require(h >= 1, "hidden", "layer widths must be positive");
  try {
    margins.validate();
  } catch (const Error& e) {
    bad("margin_*", e.what());
  }

  using objectives::ObjectiveKind;
  if (model == ModelKind::Mlp) {
    require(objective.kind != ObjectiveKind::Adversarial, "objective",
            "adversarial removal needs an embedding model");
    require(flip.mode != FlipMode::IdentitySwap, "flip_mode", "identity_swap needs an embedding model");
  } else {
    require(feature_dim >= 1, "feature_dim", "must be at least 1");
    require(objective.kind != ObjectiveKind::EqOddsPenalty && objective.kind != ObjectiveKind::DispImpactPenalty,
            "objective", "eq_odds and disp_impact need binary labels (mlp model)");
    require(flip.mode != FlipMode::BinaryFlip, "flip_mode", "binary_flip needs an mlp model");
    require(base_loss == eval::BaseLoss::Bce, "base_loss", "embedding models use the margin head loss");
  }
  require(!(flip.schedule == FlipSchedule::PerIteration && flip.mode == FlipMode::IdentitySwap), "flip_schedule",
          "per_iteration flipping applies to binary_flip only");
  if (objective.penalty_split == objectives::PenaltySplit::Holdout) {
    require(objective.has_penalty(), "penalty_split", "holdout needs equal_loss, eq_odds or disp_impact");
  }
}

eval::LossSpec ExperimentConfig::loss_spec(const data::Dataset& data) const {
  eval::LossSpec spec;
  spec.base = base_loss;
  spec.focal_gamma = focal_gamma;
  spec.margins = margins;
  if (base_loss == eval::BaseLoss::WeightedBce && data.task == data::TaskKind::Binary) {
    std::vector<int> labels;
    for (auto r : data.indices(data::Split::Train))
      for (std::size_t t = 0; t < data.num_tasks; ++t) labels.push_back(data.label(r, t));
    spec.pos_weight = objectives::balanced_pos_weight(labels);
  }
  return spec;
}

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

std::string serialize(const ExperimentConfig& c) {
  using text::format_double;
  std::ostringstream o;
  o << "version = " << ExperimentConfig::kVersion << '\n';
  o << "model = " << to_string(c.model) << '\n';
  o << "hidden = " << join(c.hidden) << '\n';
  o << "feature_dim = " << c.feature_dim << '\n';
  o << "base_loss = " << eval::to_string(c.base_loss) << '\n';
  o << "focal_gamma = " << format_double(c.focal_gamma) << '\n';
  o << "objective = " << objectives::to_string(c.objective.kind) << '\n';
  o << "alpha = " << format_double(c.objective.alpha) << '\n';
  o << "penalty_split = " << objectives::to_string(c.objective.penalty_split) << '\n';
  o << "holdout_fraction = " << format_double(c.holdout_fraction) << '\n';
  o << "holdout_schedule = " << to_string(c.holdout_schedule) << '\n';
  o << "learning_rate = " << format_double(c.optimizer.learning_rate) << '\n';
  o << "momentum = " << format_double(c.optimizer.momentum) << '\n';
  o << "weight_decay = " << format_double(c.optimizer.weight_decay) << '\n';
  o << "decay_epochs = " << join(c.optimizer.decay_epochs) << '\n';
  o << "decay_factor = " << format_double(c.optimizer.decay_factor) << '\n';
  o << "epochs = " << c.epochs << '\n';
  o << "batch_size = " << c.batch_size << '\n';
  o << "seed = " << c.seed << '\n';
  o << "flip_mode = " << to_string(c.flip.mode) << '\n';
  o << "flip_group = " << c.flip.group << '\n';
  o << "flip_fraction = " << format_double(c.flip.fraction) << '\n';
  o << "flip_schedule = " << to_string(c.flip.schedule) << '\n';
  if (c.model == ModelKind::Embedding) {
    o << "margin_scale = " << format_double(c.margins.scale) << '\n';
    o << "margin_a0 = " << format_double(c.margins.margin_per_group[0]) << '\n';
    o << "margin_a1 = " << format_double(c.margins.margin_per_group[1]) << '\n';
    o << "adv_group = " << c.adversarial.penalized_group << '\n';
    o << "adv_projection_hidden = " << c.adversarial.projection_hidden << '\n';
    o << "adv_discriminator_hidden = " << c.adversarial.discriminator_hidden << '\n';
    o << "adv_identity_init = " << (c.adversarial.identity_init ? "true" : "false") << '\n';
    o << "adv_discriminator_lr = " << format_double(c.adversarial.discriminator_lr) << '\n';
  }
  return o.str();
}

namespace {

std::size_t to_count(std::string_view v, std::string_view key) {
  const long long n = text::parse_int(v, key);
  if (n < 0) bad(key, "must be non-negative");
  return static_cast<std::size_t>(n);
}

std::vector<std::size_t> to_list(std::string_view v, std::string_view key) {
  std::vector<std::size_t> out;
  if (text::trim(v).empty()) return out;
  for (auto tok : text::split(v, ',')) out.push_back(to_count(tok, key));
  return out;
}

bool to_bool(std::string_view v, std::string_view key) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad(key, "expected true or false, got '" + std::string(v) + "'");
}

int to_group(std::string_view v, std::string_view key) {
  const long long n = text::parse_int(v, key);
  if (n != 0 && n != 1) bad(key, "must be 0 or 1");
  return static_cast<int>(n);
}

}  // namespace

ExperimentConfig parse_config(std::string_view text_in, std::string_view source) {
  std::map<std::string, std::string> kv;
  std::map<std::string, std::size_t> line_of;
  std::size_t line_no = 0;
  for (auto line : text::split(text_in, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key(text::trim(line.substr(0, eq)));
    const std::string value(text::trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (kv.contains(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    kv[key] = value;
    line_of[key] = line_no;
  }

  if (!kv.contains("version")) throw ConfigError(std::string(source) + ": missing 'version' key");
  ExperimentConfig c;
  std::set<std::string> seen;
  for (const auto& [key, value] : kv) {
    const std::string where = std::string(source) + ":" + std::to_string(line_of[key]);
    try {
      const std::string_view v = value;
      if (key == "version") {
        if (text::parse_int(v, key) != ExperimentConfig::kVersion) {
          bad(key, "unsupported version " + value + " (this build reads version " +
                       std::to_string(ExperimentConfig::kVersion) + ")");
        }
      } else if (key == "model") {
        if (v == "mlp")
          c.model = ModelKind::Mlp;
        else if (v == "embedding")
          c.model = ModelKind::Embedding;
        else
          bad(key, "expected mlp or embedding");
      } else if (key == "hidden") {
        c.hidden = to_list(v, key);
      } else if (key == "feature_dim") {
        c.feature_dim = to_count(v, key);
      } else if (key == "base_loss") {
        c.base_loss = eval::parse_base_loss(v);
      } else if (key == "focal_gamma") {
        c.focal_gamma = text::parse_double(v, key);
      } else if (key == "objective") {
        c.objective.kind = objectives::parse_objective_kind(v);
      } else if (key == "alpha") {
        c.objective.alpha = text::parse_double(v, key);
      } else if (key == "penalty_split") {
        c.objective.penalty_split = objectives::parse_penalty_split(v);
      } else if (key == "holdout_fraction") {
        c.holdout_fraction = text::parse_double(v, key);
      } else if (key == "holdout_schedule") {
        if (v == "alternate")
          c.holdout_schedule = HoldoutSchedule::Alternate;
        else if (v == "joint")
          c.holdout_schedule = HoldoutSchedule::Joint;
        else
          bad(key, "expected alternate or joint");
      } else if (key == "learning_rate") {
        c.optimizer.learning_rate = text::parse_double(v, key);
      } else if (key == "momentum") {
        c.optimizer.momentum = text::parse_double(v, key);
      } else if (key == "weight_decay") {
        c.optimizer.weight_decay = text::parse_double(v, key);
      } else if (key == "decay_epochs") {
        c.optimizer.decay_epochs = to_list(v, key);
      } else if (key == "decay_factor") {
        c.optimizer.decay_factor = text::parse_double(v, key);
      } else if (key == "epochs") {
        c.epochs = to_count(v, key);
      } else if (key == "batch_size") {
        c.batch_size = to_count(v, key);
      } else if (key == "seed") {
        std::uint64_t s = 0;
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
        if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) bad(key, "expected an unsigned integer");
        c.seed = s;
      } else if (key == "flip_mode") {
        if (v == "none")
          c.flip.mode = FlipMode::None;
        else if (v == "binary_flip")
          c.flip.mode = FlipMode::BinaryFlip;
        else if (v == "identity_swap")
          c.flip.mode = FlipMode::IdentitySwap;
        else
          bad(key, "expected none, binary_flip or identity_swap");
      } else if (key == "flip_group") {
        c.flip.group = to_group(v, key);
      } else if (key == "flip_fraction") {
        c.flip.fraction = text::parse_double(v, key);
      } else if (key == "flip_schedule") {
        if (v == "once")
          c.flip.schedule = FlipSchedule::Once;
        else if (v == "per_iteration")
          c.flip.schedule = FlipSchedule::PerIteration;
        else
          bad(key, "expected once or per_iteration");
      } else if (key == "margin_scale") {
        c.margins.scale = text::parse_double(v, key);
      } else if (key == "margin_a0") {
        c.margins.margin_per_group[0] = text::parse_double(v, key);
      } else if (key == "margin_a1") {
        c.margins.margin_per_group[1] = text::parse_double(v, key);
      } else if (key == "adv_group") {
        c.adversarial.penalized_group = to_group(v, key);
      } else if (key == "adv_projection_hidden") {
        c.adversarial.projection_hidden = to_count(v, key);
      } else if (key == "adv_discriminator_hidden") {
        c.adversarial.discriminator_hidden = to_count(v, key);
      } else if (key == "adv_identity_init") {
        c.adversarial.identity_init = to_bool(v, key);
      } else if (key == "adv_discriminator_lr") {
        c.adversarial.discriminator_lr = text::parse_double(v, key);
      } else {
        throw ConfigError("unknown key '" + key + "'");
      }
    } catch (const Error& e) {
      throw ConfigError(where + ": " + e.what());
    }
    seen.insert(key);
  }

  if (c.model == ModelKind::Mlp) {
    for (const auto& key : seen) {
      if (key.starts_with("margin_") || key.starts_with("adv_")) {
        throw ConfigError(std::string(source) + ":" + std::to_string(line_of[key]) + ": key '" + key +
                          "' applies to embedding models, but model = mlp");
      }
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config file '" + path.string() + "'");
  out << serialize(config);
  if (!out) throw ConfigError("failed writing config file '" + path.string() + "'");
}

std::uint64_t config_hash(const ExperimentConfig& config) { return text::fnv1a(serialize(config)); }

}  // namespace fairlab::train
