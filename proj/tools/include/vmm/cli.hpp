#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vmm/simulation.hpp"

namespace vmm::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitEstimation = 3;

/// Bad flags, configuration or input data.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Serializes with every double printed to 17 significant digits; NaN and
/// infinities become null.
std::string format_json(const Json& value, int indent = 2);
void write_json(const std::filesystem::path& path, const Json& value);

/// Comma-separated values with a header row. Every cell must be a finite number.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_numbers;

  /// Position of a named column; throws UsageError naming it when absent.
  std::size_t column(const std::string& name, const std::string& role) const;
};

CsvTable parse_csv(std::istream& in, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);

/// Estimator choice and hyperparameters shared by `estimate` and `simulate`.
struct EstimatorSettings {
  std::string kind = "kernel-vmm";  // owgmm, kernel-vmm, kernel-iv, neural-vmm
  EstimatorConfig config;
  double lambda = 1e-3;                 // kernel-iv ridge
  std::optional<KernelSpec> kernel_g;   // kernel-iv treatment kernel

  void validate() const;
};

struct EstimateConfig {
  std::string problem = "linear_iv";  // linear_iv or quantile_iv
  double quantile = 0.5;
  std::optional<double> temperature;
  std::vector<std::string> z_columns;
  std::vector<std::string> t_columns;
  std::string y_column;
  EstimatorSettings estimator;
  std::uint64_t seed = 0;
  std::string data;
  std::string out;
  std::optional<std::string> residuals;

  void validate() const;
};

struct SimulateConfig {
  DgpSpec dgp;
  EstimatorSettings estimator;
  Index n = 1000;
  Index reps = 100;
  std::uint64_t seed = 0;
  double efficiency_band = 0.2;
  std::string out_dir = "results";

  void validate() const;
};

Json to_json(const EstimatorSettings& s);
Json to_json(const EstimateConfig& c);
Json to_json(const SimulateConfig& c);
/// Unknown keys anywhere in the document are rejected with UsageError.
EstimateConfig estimate_config_from_json(const Json& j);
SimulateConfig simulate_config_from_json(const Json& j);
/// Propagates the seed and the shared optimizer settings; call after flag overrides.
void finalize(EstimateConfig& c);
void finalize(SimulateConfig& c);
Json load_json_file(const std::filesystem::path& path);

/// Runs the command line `args` (without the program name); returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vmm::cli
