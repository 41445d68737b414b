#pragma once

// Command implementations behind the fairlab executable. Each command writes
// one run directory holding its artifacts and a manifest.json.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fairlab/dataio.hpp"

namespace fairlab::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum class GeneratorKind { Classification, Retrieval, Gerrymander };

// Key-value generator description; classification specs start from
// default_classification_spec and override the listed fields.
struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::Classification;
  std::size_t dim = 20;
  double separation = 2.0;
  double group_shift = 1.0;
  double sigma = 1.0;
  double p_a1 = 0.6;
  double p_g1 = 0.5;
  double p_y1 = 0.5;
  std::array<double, 2> label_noise{0.0, 0.0};
  std::size_t n_train = 400;
  std::size_t n_holdout = 0;
  std::size_t n_val = 0;
  std::size_t n_test = 400;
  data::RetrievalSpec retrieval;
  std::uint64_t seed = 0;

  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

std::string serialize(const GeneratorSpec& spec);
GeneratorSpec parse_generator_spec(std::string_view text, std::string_view source = "<spec>");
data::Dataset generate(const GeneratorSpec& spec);

enum class Preset { OverfitDemo, HoldoutDemo, GerrymanderDemo, AdversarialDemo, FlipDemo };

std::string_view to_string(Preset p);
Preset parse_preset(std::string_view s);
std::vector<Preset> all_presets();
GeneratorSpec preset_data_spec(Preset p);

struct RunManifest {
  std::string command;
  std::string tool_version{kToolVersion};
  std::string config_file;  // relative to the run directory
  std::string config_hash;  // FNV-1a of the stored config file
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> artifacts;  // name -> relative path
  std::vector<std::pair<std::string, std::string>> artifact_hashes;
  std::string created_utc;
};

// Writes manifest.json after checking that every artifact exists; hashes are
// filled in from the files. Timestamps are the only time-dependent field.
void write_manifest(RunManifest manifest, const std::filesystem::path& run_dir);
RunManifest read_manifest(const std::filesystem::path& run_dir);

// A --data argument: a CSV file or a directory holding data.csv.
std::filesystem::path resolve_data_path(const std::filesystem::path& p);

void cmd_generate(const std::optional<std::filesystem::path>& spec_file, std::optional<Preset> preset,
                  std::optional<std::uint64_t> seed, const std::filesystem::path& out_dir);

void cmd_train(const std::filesystem::path& config_file, const std::filesystem::path& data,
               const std::filesystem::path& out_dir, std::optional<std::uint64_t> seed,
               const std::optional<std::filesystem::path>& pretrained);

void cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                  const std::filesystem::path& out_dir, const std::optional<std::filesystem::path>& config_file);

void cmd_audit(const std::filesystem::path& baseline_checkpoint, const std::filesystem::path& fair_checkpoint,
               const std::filesystem::path& data, const std::filesystem::path& out_dir, data::Split split);

struct PresetSummary {
  std::string preset;
  std::vector<std::pair<std::string, double>> values;

  double value(std::string_view name) const;
};

// Runs a whole demo pipeline (generate, train, evaluate, audit) under out_dir
// and writes summary.txt / summary.csv beside the sub-run directories.
PresetSummary cmd_report(Preset preset, const std::filesystem::path& out_dir, std::optional<std::uint64_t> seed);

}  // namespace fairlab::cli
