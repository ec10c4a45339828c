#include "risn/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

namespace risn::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using solve::BenchmarkResult;
using solve::ModelKind;

std::string tool_version() { return RISN_VERSION; }

// ------------------------------------------------------------ manifest

json to_json(const RunManifest& m) {
  return {{"command", m.command}, {"config", m.config},   {"problems", m.problems},
          {"seeds", m.seeds},     {"version", m.version}, {"timestamp", m.timestamp}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config");
    m.problems = j.at("problems").get<std::vector<std::string>>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.version = j.at("version").get<std::string>();
    m.timestamp = j.at("timestamp").get<std::string>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("manifest: ") + e.what());
  }
  return m;
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunManifest make_manifest(const std::string& command, json config, std::vector<std::string> problems,
                          std::vector<std::uint64_t> seeds) {
  return {command, std::move(config), std::move(problems), std::move(seeds), tool_version(), utc_now()};
}

// ------------------------------------------------------------ csv

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

std::string csv_record(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_field(fields[i]);
  }
  return line + "\r\n";
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c != '"') {
        field += c;
      } else if (i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else {
        quoted = false;
      }
      continue;
    }
    any = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      record.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(record));
      record.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw std::invalid_argument("csv: unterminated quoted field");
  if (any) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

}  // namespace

void write_csv(const fs::path& path, std::vector<std::string> header, const std::vector<std::vector<std::string>>& rows,
               const RunManifest& manifest) {
  header.push_back("manifest");
  std::string text = csv_record(header);
  const std::string m = to_json(manifest).dump();
  if (rows.empty()) {
    std::vector<std::string> only(header.size());
    only.back() = m;
    text += csv_record(only);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto r = rows[i];
    if (r.size() + 1 != header.size()) throw std::logic_error("csv row width does not match the header");
    r.push_back(i == 0 ? m : std::string());
    text += csv_record(r);
  }
  write_text(path, text);
}

// ------------------------------------------------------------ run

std::vector<RunRecord> run_sessions(const RunRequest& request, std::ostream* log) {
  struct Job {
    const prob::ProblemSpec* spec;
    ModelKind model;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& spec : request.problems)
    for (ModelKind model : request.models)
      for (std::uint64_t seed : request.seeds) jobs.push_back({&spec, model, seed});

  std::vector<RunRecord> records(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::size_t done = 0;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      RunRecord& rec = records[i];
      rec.result.problem = job.spec->id;
      rec.result.model = job.model;
      rec.result.seed = job.seed;
      try {
        solve::TrainConfig c = request.config;
        c.seed = job.seed;
        auto out = solve::train(*job.spec, c, job.model);
        rec.result = std::move(out.result);
        rec.params = std::move(out.params);
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      if (!log) continue;
      std::lock_guard lock(log_mutex);
      ++done;
      *log << "[" << done << "/" << jobs.size() << "] " << job.spec->id << " " << solve::to_string(job.model)
           << " seed " << job.seed << ": ";
      if (!rec.error.empty()) {
        *log << "failed: " << rec.error << "\n";
      } else {
        *log << "mae " << format_double(mean(rec.result.mae)) << " loss " << format_double(rec.result.final_loss)
             << " iters " << rec.result.iterations << " " << format_double(rec.result.wall_ms) << " ms\n";
      }
      log->flush();
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(request.jobs, 1, std::max<std::size_t>(jobs.size(), 1));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return records;
}

fs::path params_path(const fs::path& out_dir, const std::string& problem, ModelKind model, std::uint64_t seed,
                     std::size_t unknown) {
  return out_dir / "params" /
         (problem + "_" + solve::to_string(model) + "_s" + std::to_string(seed) + "_u" + std::to_string(unknown + 1) +
          ".json");
}

namespace {

fs::path trace_path(const fs::path& dir, const std::string& stem) { return dir / "traces" / (stem + ".csv"); }

void write_trace(const fs::path& path, const std::vector<solve::IterationRecord>& history,
                 const RunManifest& manifest) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& h : history)
    rows.push_back({std::to_string(h.iter), format_double(h.loss), format_double(h.grad_norm)});
  write_csv(path, {"iter", "loss", "grad_norm"}, rows, manifest);
}

}  // namespace

void write_run_outputs(const RunRequest& request, const std::vector<RunRecord>& records, const RunManifest& manifest) {
  const fs::path& dir = request.out_dir;
  fs::create_directories(dir / "params");
  json results = json::array(), failures = json::array();
  std::size_t max_unknowns = 1;
  for (const auto& spec : request.problems) max_unknowns = std::max(max_unknowns, spec.unknowns());

  std::vector<std::vector<std::string>> rows;
  for (const auto& rec : records) {
    const auto& r = rec.result;
    if (!rec.error.empty()) {
      failures.push_back(
          {{"problem", r.problem}, {"model", solve::to_string(r.model)}, {"seed", r.seed}, {"error", rec.error}});
      continue;
    }
    results.push_back(solve::to_json(r, request.trace));
    for (std::size_t q = 0; q < rec.params.size(); ++q)
      net::save_params(rec.params[q], params_path(dir, r.problem, r.model, r.seed, q));
    if (request.trace)
      write_trace(trace_path(dir, r.problem + "_" + solve::to_string(r.model) + "_s" + std::to_string(r.seed)),
                  r.history, manifest);
    std::vector<std::string> row{r.problem,
                                 solve::to_string(r.model),
                                 std::to_string(r.seed),
                                 r.mae.empty() ? std::string() : format_double(mean(r.mae)),
                                 format_double(r.final_loss),
                                 std::to_string(r.iterations),
                                 format_double(r.wall_ms),
                                 r.converged ? "true" : "false"};
    for (std::size_t q = 0; q < max_unknowns; ++q) row.push_back(q < r.mae.size() ? format_double(r.mae[q]) : "");
    rows.push_back(std::move(row));
  }
  json doc = {{"manifest", to_json(manifest)}, {"results", std::move(results)}};
  if (!failures.empty()) doc["failures"] = std::move(failures);
  write_text(dir / "results.json", doc.dump(2) + "\n");

  std::vector<std::string> header{"problem", "model", "seed", "mae", "loss", "iters", "wall_ms", "converged"};
  for (std::size_t q = 0; q < max_unknowns; ++q) header.push_back("mae_u" + std::to_string(q + 1));
  write_csv(dir / "results.csv", header, rows, manifest);
}

ResultsFile load_results(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  ResultsFile f;
  if (!doc.is_object() || !doc.contains("results") || !doc.at("results").is_array())
    throw std::runtime_error(path.string() + ": expected an object with a 'results' array");
  if (doc.contains("manifest")) f.manifest = manifest_from_json(doc.at("manifest"));
  for (const auto& r : doc.at("results")) f.results.push_back(solve::benchmark_from_json(r));
  return f;
}

std::optional<BenchmarkResult> best_run(const std::vector<BenchmarkResult>& results, const std::string& problem,
                                        ModelKind model) {
  std::optional<BenchmarkResult> best;
  auto score = [](const BenchmarkResult& r) {
    const double m = mean(r.mae);
    return std::isfinite(m) ? m : std::numeric_limits<double>::infinity();
  };
  for (const auto& r : results) {
    if (r.problem != problem || r.model != model) continue;
    if (!best || score(r) < score(*best) || (score(r) == score(*best) && r.seed < best->seed)) best = r;
  }
  return best;
}

// ------------------------------------------------------------ tables

const std::vector<std::string>& table_problems(int k) {
  static const std::vector<std::vector<std::string>> tables{
      {"P01", "P02", "P03", "P04", "P05", "P06"},
      {"P07", "P08"},
      {"P09", "P10", "P11"},
      {"P12", "P13", "P14", "P15"},
      {"P16", "P17", "P18"},
      {"P01", "P02", "P03", "P04", "P05", "P06", "P07", "P08", "P09", "P10",
       "P11", "P12", "P13", "P14", "P15", "P16", "P17", "P18", "P19", "P20"},
  };
  if (k < 1 || k > 6) throw UsageError("--table must be between 1 and 6");
  return tables[std::size_t(k - 1)];
}

namespace {

std::string format_mae(double v) {
  if (!std::isfinite(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string cell(const std::optional<BenchmarkResult>& r, std::optional<std::size_t> unknown) {
  if (!r || r->mae.empty()) return "-";
  if (unknown) return *unknown < r->mae.size() ? format_mae(r->mae[*unknown]) : "-";
  std::string s;
  for (std::size_t q = 0; q < r->mae.size(); ++q) s += (q ? ";" : "") + format_mae(r->mae[q]);
  return s;
}

}  // namespace

Table build_table(int k, const std::vector<BenchmarkResult>& results) {
  Table t;
  t.number = k;
  for (const auto& id : table_problems(k)) {
    const auto pinn = best_run(results, id, ModelKind::Pinn);
    const auto risn = best_run(results, id, ModelKind::Risn);
    if (!pinn && !risn) t.missing.push_back(id);
    const std::size_t m = prob::get_problem(id).unknowns();
    if (k == 3) {
      // systems are split into one row per unknown
      for (std::size_t q = 0; q < m; ++q)
        t.rows.push_back({id + ":u" + std::to_string(q + 1), cell(pinn, q), cell(risn, q)});
    } else {
      t.rows.push_back({id, cell(pinn, std::nullopt), cell(risn, std::nullopt)});
    }
  }
  return t;
}

// ------------------------------------------------------------ plot data

ad::Tensor plot_grid(const prob::ProblemSpec& spec) {
  const std::size_t d = spec.dims();
  const std::size_t k = d == 1 ? 500 : 50;
  std::size_t n = 1;
  for (std::size_t a = 0; a < d; ++a) n *= k;
  ad::Tensor x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i;
    for (std::size_t a = d; a-- > 0;) {
      const auto iv = spec.domain[a];
      x(i, a) = iv.lo + (iv.hi - iv.lo) * double(rem % k) / double(k - 1);
      rem /= k;
    }
  }
  return x;
}

PlotData plot_data(const prob::ProblemSpec& spec, const Predictors& predictors) {
  const ad::Tensor x = plot_grid(spec);
  const bool system = spec.unknowns() > 1;
  PlotData p;
  p.header = spec.variables;
  if (system) p.header.push_back("unknown");
  for (const char* c : {"u_reference_or_exact", "u_risn", "u_pinn", "abs_err_risn", "abs_err_pinn"})
    p.header.push_back(c);
  for (std::size_t q = 0; q < spec.unknowns(); ++q) {
    const auto ref = solve::reference_values(spec, q, x);
    std::map<ModelKind, std::vector<double>> pred;
    for (const auto& [model, f] : predictors) pred[model] = f(q, x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      std::vector<std::string> row;
      for (std::size_t a = 0; a < spec.dims(); ++a) row.push_back(format_double(x(i, a)));
      if (system) row.push_back("u" + std::to_string(q + 1));
      row.push_back(format_double(ref[i]));
      std::string err_cols[2];
      for (int m = 0; m < 2; ++m) {
        const ModelKind model = m == 0 ? ModelKind::Risn : ModelKind::Pinn;
        const auto it = pred.find(model);
        if (it == pred.end()) {
          row.emplace_back();
          continue;
        }
        row.push_back(format_double(it->second.at(i)));
        err_cols[m] = format_double(std::abs(it->second[i] - ref[i]));
      }
      row.push_back(err_cols[0]);
      row.push_back(err_cols[1]);
      p.rows.push_back(std::move(row));
    }
  }
  return p;
}

// ------------------------------------------------------------ commands

namespace {

std::string command_line(int argc, const char* const* argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    std::string a = argv[i];
    if (a.empty() || a.find_first_of(" \t\"'") != std::string::npos) a = "'" + a + "'";
    s += (i ? " " : "") + a;
  }
  return s;
}

std::vector<ModelKind> parse_models(const std::string& s) {
  if (s == "both") return {ModelKind::Risn, ModelKind::Pinn};
  try {
    return {solve::model_from_string(s)};
  } catch (const std::exception&) {
    throw UsageError("--model must be risn, pinn or both");
  }
}

json load_json_file(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

/// A TrainConfig file is either a bare config or a results file whose
/// manifest carries one.
solve::TrainConfig load_train_config(const fs::path& path) {
  const json j = load_json_file(path);
  if (j.contains("manifest")) return solve::train_config_from_json(j.at("manifest").at("config").at("train"));
  return solve::train_config_from_json(j);
}

/// Custom problems travel inside the manifest so that reruns and plots do
/// not depend on the original file.
prob::ProblemSpec problem_for(const std::string& id, const RunManifest* manifest) {
  if (manifest && manifest->config.contains("problem_files") && manifest->config["problem_files"].contains(id))
    return prob::problem_from_json(manifest->config["problem_files"][id]);
  return prob::get_problem(id);
}

struct RunOptions {
  std::vector<std::string> problems;
  bool all = false;
  std::vector<std::string> configs;
  std::string model = "both";
  std::vector<std::uint64_t> seeds{0};
  std::string train_config;
  std::string rerun;
  std::size_t max_iters = 0;
  std::string out = "results";
  bool trace = false;
  std::size_t jobs = 1;
};

int cmd_run(const RunOptions& o, const std::string& command, std::ostream& out, std::ostream& err) {
  RunRequest req;
  req.out_dir = o.out;
  req.trace = o.trace;
  req.jobs = o.jobs;
  json problem_files = json::object();
  std::vector<std::string> models;

  if (!o.rerun.empty()) {
    if (o.all || !o.problems.empty() || !o.configs.empty() || !o.train_config.empty())
      throw UsageError("--rerun takes problems, seeds and config from the manifest");
    const RunManifest m = load_results(o.rerun).manifest;
    req.config = solve::train_config_from_json(m.config.at("train"));
    for (const auto& id : m.problems) req.problems.push_back(problem_for(id, &m));
    for (const auto& s : m.config.at("models")) req.models.push_back(solve::model_from_string(s.get<std::string>()));
    req.seeds = m.seeds;
    if (m.config.contains("problem_files")) problem_files = m.config["problem_files"];
  } else {
    if (o.all && !o.problems.empty()) throw UsageError("--all and --problem are exclusive");
    if (!o.all && o.problems.empty() && o.configs.empty())
      throw UsageError("one of --problem, --all, --config or --rerun is required");
    if (o.seeds.empty()) throw UsageError("--seeds must not be empty");
    if (!o.train_config.empty()) req.config = load_train_config(o.train_config);
    const auto ids = o.all ? prob::problem_ids() : o.problems;
    for (const auto& id : ids) req.problems.push_back(prob::get_problem(id));
    for (const auto& path : o.configs) {
      if (!fs::is_regular_file(path)) throw std::runtime_error("cannot read config file " + path);
      auto spec = solve::load_and_check_problem(path);
      problem_files[spec.id] = prob::to_json(spec);
      req.problems.push_back(std::move(spec));
    }
    req.models = parse_models(o.model);
    req.seeds = o.seeds;
  }
  if (o.max_iters) req.config.optimizer.max_iters = o.max_iters;
  req.config.validate();
  for (ModelKind m : req.models) models.push_back(solve::to_string(m));

  json config = {{"train", solve::to_json(req.config)}, {"models", models}};
  if (!problem_files.empty()) config["problem_files"] = problem_files;
  std::vector<std::string> ids;
  for (const auto& p : req.problems) ids.push_back(p.id);
  const RunManifest manifest = make_manifest(command, std::move(config), ids, req.seeds);

  const auto records = run_sessions(req, &err);
  write_run_outputs(req, records, manifest);
  std::size_t failed = 0;
  for (const auto& r : records) failed += !r.error.empty();
  out << "wrote " << (req.out_dir / "results.json").string() << " (" << records.size() - failed << " runs";
  if (failed) out << ", " << failed << " failed";
  out << ")\n";
  return failed ? kExitFailure : kExitOk;
}

fs::path sibling(const fs::path& in, const std::string& name) {
  return in.has_parent_path() ? in.parent_path() / name : fs::path(name);
}

int cmd_table(int k, const std::string& in, std::string out_path, const std::string& command, std::ostream& out,
              std::ostream& err) {
  table_problems(k);
  const ResultsFile f = load_results(in);
  const Table t = build_table(k, f.results);
  if (!t.missing.empty()) {
    err << "error: results file has no runs for:";
    for (const auto& id : t.missing) err << " " << id;
    err << "\n";
    return kExitFailure;
  }
  if (out_path.empty()) out_path = sibling(in, "table" + std::to_string(k) + ".csv").string();
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : t.rows) rows.push_back({r.label, r.pinn, r.risn});
  std::vector<std::string> ids = table_problems(k);
  const auto manifest =
      make_manifest(command, {{"table", k}, {"source", to_json(f.manifest)}}, ids, f.manifest.seeds);
  write_csv(out_path, {"problem", "pinn_mae", "risn_mae"}, rows, manifest);
  out << "wrote " << out_path << " (" << rows.size() << " rows)\n";
  return kExitOk;
}

int cmd_plot_data(const std::string& id, const std::string& in, std::string out_path, const std::string& command,
                  std::ostream& out) {
  const ResultsFile f = load_results(in);
  const auto spec = problem_for(id, &f.manifest);
  const fs::path dir = in.empty() ? fs::path(".") : (fs::path(in).has_parent_path() ? fs::path(in).parent_path() : ".");
  Predictors predictors;
  std::vector<std::uint64_t> seeds;
  json used = json::object();
  for (ModelKind model : {ModelKind::Risn, ModelKind::Pinn}) {
    const auto best = best_run(f.results, id, model);
    if (!best) continue;
    std::vector<net::ResidualMlpParams> params;
    for (std::size_t q = 0; q < spec.unknowns(); ++q) {
      const auto p = params_path(dir, id, model, best->seed, q);
      if (!fs::is_regular_file(p)) throw std::runtime_error("missing saved parameters " + p.string());
      params.push_back(net::load_params(p));
    }
    predictors[model] = [params](std::size_t q, const ad::Tensor& x) { return net::forward(params[q], x).values(); };
    used[solve::to_string(model)] = best->seed;
    seeds.push_back(best->seed);
  }
  if (predictors.empty()) throw std::runtime_error("missing saved parameters: no runs of " + id + " in " + in);
  if (out_path.empty()) out_path = sibling(in, "plot_" + id + ".csv").string();
  const PlotData p = plot_data(spec, predictors);
  const auto manifest = make_manifest(command, {{"seeds_used", used}, {"source", to_json(f.manifest)}}, {id}, seeds);
  write_csv(out_path, p.header, p.rows, manifest);
  out << "wrote " << out_path << " (" << p.rows.size() << " rows)\n";
  return kExitOk;
}

struct SweepOptions {
  std::string problem;
  std::string config;
  std::vector<std::size_t> depths;
  std::vector<double> lrs;
  std::vector<std::uint64_t> seeds{0};
  std::string train_config;
  std::size_t max_iters = 0;
  std::string out = "sweep";
};

int cmd_sweep(const SweepOptions& o, const std::string& command, std::ostream& out) {
  if (o.problem.empty() == o.config.empty()) throw UsageError("exactly one of --problem or --config is required");
  if (o.depths.empty() || o.lrs.empty() || o.seeds.empty()) throw UsageError("--depths, --lrs and --seeds are required");
  solve::TrainConfig base;
  if (!o.train_config.empty()) base = load_train_config(o.train_config);
  if (o.max_iters) base.optimizer.max_iters = o.max_iters;
  base.validate();
  json config = {{"train", solve::to_json(base)}, {"depths", o.depths}, {"lrs", o.lrs}};
  prob::ProblemSpec spec;
  if (!o.config.empty()) {
    if (!fs::is_regular_file(o.config)) throw std::runtime_error("cannot read config file " + o.config);
    spec = solve::load_and_check_problem(o.config);
    config["problem_files"] = {{spec.id, prob::to_json(spec)}};
  } else {
    spec = prob::get_problem(o.problem);
  }
  const auto manifest = make_manifest(command, config, {spec.id}, o.seeds);
  const auto rows = solve::sensitivity_sweep(spec, o.depths, o.lrs, o.seeds, base);

  const fs::path dir = o.out;
  std::vector<std::vector<std::string>> table;
  for (const auto& r : rows) {
    const std::string stem = spec.id + "_d" + std::to_string(r.depth) + "_lr" + format_double(r.lr) + "_s" +
                             std::to_string(r.seed) + "_" + solve::to_string(r.model);
    std::string trace;
    if (r.error.empty()) {
      write_trace(trace_path(dir, stem), r.history, manifest);
      trace = fs::relative(trace_path(dir, stem), dir).generic_string();
    }
    table.push_back({std::to_string(r.depth), format_double(r.lr), std::to_string(r.seed), solve::to_string(r.model),
                     format_double(r.mae), format_double(r.final_loss),
                     std::to_string(r.history.empty() ? 0 : r.history.back().iter), trace, r.error});
  }
  write_csv(dir / "sweep.csv",
            {"depth", "lr", "seed", "model", "mae", "final_loss", "iterations", "trace", "error"}, table, manifest);
  out << "wrote " << (dir / "sweep.csv").string() << " (" << table.size() << " rows)\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Residual integral solver networks: benchmarks, tables, plot data and sweeps", "risn"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version());

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Train problems and write results.json / results.csv");
  run_cmd->add_option("--problem", run.problems, "Registry problem ids")->delimiter(',');
  run_cmd->add_flag("--all", run.all, "Every registry problem");
  run_cmd->add_option("--config", run.configs, "Problem definition file (JSON)");
  run_cmd->add_option("--model", run.model, "risn, pinn or both")->capture_default_str();
  run_cmd->add_option("--seeds", run.seeds, "Comma-separated seeds")
      ->delimiter(',')
      ->envname("RISN_DEFAULT_SEED")
      ->capture_default_str();
  run_cmd->add_option("--train-config", run.train_config, "TrainConfig JSON, or a results file to copy it from");
  run_cmd->add_option("--rerun", run.rerun, "Repeat the run recorded in a results file");
  run_cmd->add_option("--max-iters", run.max_iters, "Override the optimizer iteration cap");
  run_cmd->add_option("--out", run.out, "Output directory")->capture_default_str();
  run_cmd->add_flag("--trace", run.trace, "Write per-iteration loss traces");
  run_cmd->add_option("--jobs", run.jobs, "Parallel training sessions")->check(CLI::PositiveNumber)->capture_default_str();

  int table_k = 0;
  std::string table_in, table_out;
  auto* table_cmd = app.add_subcommand("table", "Regenerate a comparison table as CSV");
  table_cmd->add_option("--table", table_k, "Table number 1-6")->required()->check(CLI::Range(1, 6));
  table_cmd->add_option("--in", table_in, "results.json")->required();
  table_cmd->add_option("--out", table_out, "Output CSV (default: table{K}.csv next to --in)");

  std::string plot_problem, plot_in, plot_out;
  auto* plot_cmd = app.add_subcommand("plot-data", "Solution profiles of saved networks as CSV");
  plot_cmd->add_option("--problem", plot_problem, "Problem id")->required();
  plot_cmd->add_option("--in", plot_in, "results.json")->required();
  plot_cmd->add_option("--out", plot_out, "Output CSV (default: plot_{id}.csv next to --in)");

  SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Depth and learning-rate sensitivity sweep");
  sweep_cmd->add_option("--problem", sweep.problem, "Registry problem id");
  sweep_cmd->add_option("--config", sweep.config, "Problem definition file (JSON)");
  sweep_cmd->add_option("--depths", sweep.depths, "Hidden layer counts")->delimiter(',')->required();
  sweep_cmd->add_option("--lrs", sweep.lrs, "Learning rates")->delimiter(',')->required();
  sweep_cmd->add_option("--seeds", sweep.seeds, "Seeds")
      ->delimiter(',')
      ->envname("RISN_DEFAULT_SEED")
      ->capture_default_str();
  sweep_cmd->add_option("--train-config", sweep.train_config, "TrainConfig JSON");
  sweep_cmd->add_option("--max-iters", sweep.max_iters, "Override the optimizer iteration cap");
  sweep_cmd->add_option("--out", sweep.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string command = command_line(argc, argv);
  try {
    if (*run_cmd) return cmd_run(run, command, out, err);
    if (*table_cmd) return cmd_table(table_k, table_in, table_out, command, out, err);
    if (*plot_cmd) return cmd_plot_data(plot_problem, plot_in, plot_out, command, out);
    if (*sweep_cmd) return cmd_sweep(sweep, command, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace risn::cli
