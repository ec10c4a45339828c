#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "risn/problems.hpp"
#include "risn/solver.hpp"

namespace risn::cli {

std::string tool_version();

/// Exit codes are a stable contract for scripts.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Flag misuse that the parser itself cannot detect; maps to kExitUsage.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> problems;
  std::vector<std::uint64_t> seeds;
  std::string version;
  std::string timestamp;  // UTC, ISO 8601
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
RunManifest make_manifest(const std::string& command, nlohmann::json config, std::vector<std::string> problems,
                          std::vector<std::uint64_t> seeds);

// ------------------------------------------------------------ csv

/// RFC 4180: fields with separators, quotes or line breaks are quoted and
/// embedded quotes doubled; records end in CRLF.
std::string csv_field(const std::string& s);
std::string csv_record(const std::vector<std::string>& fields);
/// Shortest text that parses back to the same double; NaN prints as "nan".
std::string format_double(double v);
/// Parses RFC 4180 text into records (used for reading our own outputs).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

/// Writes a CSV whose last column is "manifest", filled on the first data
/// row and empty elsewhere.
void write_csv(const std::filesystem::path& path, std::vector<std::string> header,
               const std::vector<std::vector<std::string>>& rows, const RunManifest& manifest);

// ------------------------------------------------------------ run

struct RunRequest {
  std::vector<prob::ProblemSpec> problems;
  std::vector<solve::ModelKind> models;
  std::vector<std::uint64_t> seeds;
  solve::TrainConfig config;
  std::size_t jobs = 1;
  bool trace = false;
  std::filesystem::path out_dir;
};

/// One (problem, model, seed) session; error is set when training threw.
struct RunRecord {
  solve::BenchmarkResult result;
  std::vector<net::ResidualMlpParams> params;
  std::string error;
};

/// Trains every combination (problem-major, then model, then seed); sessions
/// run on `jobs` workers and results keep the request order.
std::vector<RunRecord> run_sessions(const RunRequest& request, std::ostream* log = nullptr);

/// results.json, results.csv, saved parameters and optional traces.
void write_run_outputs(const RunRequest& request, const std::vector<RunRecord>& records, const RunManifest& manifest);

std::filesystem::path params_path(const std::filesystem::path& out_dir, const std::string& problem,
                                  solve::ModelKind model, std::uint64_t seed, std::size_t unknown);

struct ResultsFile {
  RunManifest manifest;
  std::vector<solve::BenchmarkResult> results;
};
ResultsFile load_results(const std::filesystem::path& path);

/// Best seed per (problem, model): smallest mean MAE, ties to the lower seed.
std::optional<solve::BenchmarkResult> best_run(const std::vector<solve::BenchmarkResult>& results,
                                               const std::string& problem, solve::ModelKind model);

// ------------------------------------------------------------ tables

struct TableRow {
  std::string label;   // problem id, or "P09:u1" for per-unknown rows
  std::string pinn;    // formatted MAE or "-"
  std::string risn;
};

struct Table {
  int number = 0;
  std::vector<TableRow> rows;
  std::vector<std::string> missing;  // ids with no run of either model
};

/// Problem ids in the row order of table k (1..6).
const std::vector<std::string>& table_problems(int k);
Table build_table(int k, const std::vector<solve::BenchmarkResult>& results);

// ------------------------------------------------------------ plot data

using Predictors = std::map<solve::ModelKind, solve::Predictor>;

/// Header and rows of the plot CSV: axis columns, an "unknown" column for
/// systems, then reference, per-model predictions and absolute errors.
/// Absent models leave their columns empty.
struct PlotData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
ad::Tensor plot_grid(const prob::ProblemSpec& spec);
PlotData plot_data(const prob::ProblemSpec& spec, const Predictors& predictors);

// ------------------------------------------------------------ entry point

/// Full command line; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace risn::cli
