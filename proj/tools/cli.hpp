#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "iterlearn/learner.hpp"
#include "iterlearn/plant.hpp"
#include "iterlearn/stability.hpp"

namespace iterlearn::cli {

using Json = nlohmann::ordered_json;

/// Invalid or unresolvable configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable input or unwritable output (exit code 4).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;
inline constexpr int kExitIo = 4;

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Nested array, {"file": path} in matrix text format, or
/// {"kind": "identity", "size": n, "scale": s}.
Eigen::MatrixXd parse_matrix(const Json& j, const std::filesystem::path& base_dir);
/// Flat array; a scalar is broadcast to `size` entries when size > 0.
Eigen::VectorXd parse_vector(const Json& j, Eigen::Index size = 0);

/// {"kind": "zero" | "constant" | "ramp" | "cumulative_sine" | "table" | "seeded_bounded", ...}.
UncertaintyModel parse_uncertainty(const Json& j, Eigen::Index dimension, std::uint64_t seed);

/// ILC system file: A, B, C, horizon, optional x0 and uncertainty.
struct IlcSystemFile {
  LiftedIlcSystem system;
  std::optional<Json> uncertainty;
};

IlcSystemFile parse_ilc_system(const Json& j, const std::filesystem::path& base_dir);

struct LawSpec {
  LawMode mode = LawMode::p_type;
  Json gain_overrides = Json::object();
};

struct ExperimentConfig {
  Json raw;
  std::filesystem::path base_dir;
  std::vector<LawSpec> laws;
  long iterations = 1;
  std::vector<std::uint64_t> seeds{0};
  bool plot = true;
};

struct Overrides {
  std::optional<long> iterations;
  std::optional<std::vector<std::uint64_t>> seeds;
};

ExperimentConfig parse_experiment(const Json& raw, const std::filesystem::path& base_dir,
                                  const Overrides& overrides = {});
ExperimentConfig load_experiment(const std::filesystem::path& path, const Overrides& overrides = {});

/// Everything that depends on the seed: the sampled true plant and N_k.
struct SeedInstance {
  std::uint64_t seed = 0;
  TransferPlant plant = TransferPlant::exact(Eigen::MatrixXd::Identity(1, 1));
  Eigen::VectorXd target;
  UncertaintyModel uncertainty;
  std::optional<Eigen::MatrixXd> surrogate;
  std::optional<StructuredUncertainty> structure;
  std::optional<StructuredUncertainty> surrogate_structure;
  Eigen::VectorXd u0;
};

SeedInstance instantiate(const ExperimentConfig& config, std::uint64_t seed);

/// Resolves K, H, H̄ and L̄ for one law; only the gains the law uses are set.
GainSet resolve_gains(const ExperimentConfig& config, const LawSpec& law,
                      const SeedInstance& instance);

SimulationConfig simulation_config(const ExperimentConfig& config, const LawSpec& law,
                                   const SeedInstance& instance);

/// Reports for every condition the law's ingredients allow.
Json condition_reports(const LawSpec& law, const SeedInstance& instance, const GainSet& gains);

struct CheckedTrace {
  std::string name;
  std::vector<double> err_inf;
};

/// Parses a trace CSV with the standard header. Throws ConfigError on a
/// header mismatch or an empty file.
CheckedTrace read_trace_csv(const std::filesystem::path& path);

/// Log-scale error-vs-iteration SVG, floored at 1e-16.
std::string render_svg(const std::vector<CheckedTrace>& traces);

struct CommonOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  Overrides overrides;
  bool quiet = false;
};

int cmd_lift(const CommonOptions& options);
int cmd_simulate(const CommonOptions& options);
int cmd_check(const CommonOptions& options);
int cmd_plot(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out,
             bool quiet);

/// Worker count: ITERLEARN_THREADS if set and positive, else the hardware count.
unsigned worker_count();

int run_main(int argc, char** argv);

}  // namespace iterlearn::cli
