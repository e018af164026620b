// Command-line front end.  All numerics live in the headers under
// include/magrobin; this file only parses configs, dispatches, and writes
// result.json plus one CSV per table (12 significant digits, LF endings).
// Exit codes: 0 ok, 2 config/usage error, 3 module (solver) error.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "magrobin/asymfit.hpp"
#include "magrobin/ball.hpp"
#include "magrobin/effective2d.hpp"
#include "magrobin/eigsolve.hpp"
#include "magrobin/geometry.hpp"
#include "magrobin/model1d.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.4.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// tables and the run record

struct Column {
  std::string name, unit, prov;  // prov: pinned | derived | measured
};

struct Table {
  std::string name;
  std::vector<Column> cols;
  std::vector<json> rows;

  template <class... T>
  void add(T&&... cells) {
    rows.push_back(json::array({json(std::forward<T>(cells))...}));
  }
};

std::string csv_cell(const json& v) {
  if (v.is_number_float()) return num(v.get<double>());
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void write_csv(const fs::path& dir, const Table& t) {
  std::ofstream f(dir / (t.name + ".csv"), std::ios::binary);
  if (!f) throw UsageError("cannot write " + (dir / (t.name + ".csv")).string());
  for (std::size_t j = 0; j < t.cols.size(); ++j) {
    if (j) f << ',';
    f << t.cols[j].name << '[' << t.cols[j].unit << "]{" << t.cols[j].prov << '}';
  }
  f << '\n';
  for (const json& row : t.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) f << ',';
      f << csv_cell(row[j]);
    }
    f << '\n';
  }
}

struct RunRecord {
  json config = json::object();
  json summary = json::object();
  json fixtures = json::array();
  std::vector<Table> tables;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

void finish(const fs::path& out, const std::string& cmd, const RunRecord& rec, double wall,
            const json* error) {
  fs::create_directories(out);
  json tables = json::object();
  for (const Table& t : rec.tables) {
    write_csv(out, t);
    json cols = json::array();
    for (const Column& c : t.cols)
      cols.push_back({{"name", c.name}, {"unit", c.unit}, {"provenance", c.prov}});
    tables[t.name] = {{"columns", cols}, {"rows", rec.tables.empty() ? json::array() : json(t.rows)}};
  }
  json res;
  res["command"] = cmd;
  res["version"] = kVersion;
  res["config"] = rec.config;
  res["results"] = {{"tables", tables}, {"summary", rec.summary}};
  res["fixtures_used"] = rec.fixtures;
  res["wall_time_s"] = wall;
  if (error) res["error"] = *error;
  write_json(out / "result.json", res);
}

template <class Body>
int guard(const fs::path& out, const std::string& cmd, json config, Body&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config = std::move(config);
  int code = 0;
  json err;
  try {
    fs::create_directories(out);
    body(rec);
  } catch (const magrobin::Error& e) {
    const std::string w = e.what();
    const auto p = w.find(": ");
    err = {{"type", p == std::string::npos ? std::string("Error") : w.substr(0, p)},
           {"message", p == std::string::npos ? w : w.substr(p + 2)}};
    code = 3;
    std::fprintf(stderr, "solver error: %s\n", w.c_str());
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish(out, cmd, rec, wall, code ? &err : nullptr);
  return code;
}

// ---------------------------------------------------------------------------
// parsing helpers

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(item, &pos);
    } catch (const std::exception&) {
      throw UsageError(what + ": cannot parse '" + item + "'");
    }
    if (pos != item.size() || !std::isfinite(v))
      throw UsageError(what + ": cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

std::vector<double> parse_range(const std::string& s, const std::string& what) {
  // lo:hi:step, inclusive of hi up to roundoff
  double lo = 0, hi = 0, step = 0;
  if (std::sscanf(s.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || !(step > 0) || hi < lo)
    throw UsageError(what + ": expected lo:hi:step with step>0, got '" + s + "'");
  std::vector<double> out;
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (int i = 0; i < n; ++i) out.push_back(lo + i * step);
  return out;
}

void require_positive(const std::vector<double>& v, const std::string& what) {
  for (double x : v)
    if (!(x > 0)) throw UsageError(what + ": values must be positive");
}

void require_decreasing(const std::vector<double>& v, const std::string& what) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) throw UsageError(what + ": values must be strictly decreasing");
}

Eigen::Vector3d parse_vec3(const std::string& s, const std::string& what) {
  const std::vector<double> v = parse_list(s, what);
  if (v.size() != 3) throw UsageError(what + ": expected three components");
  return {v[0], v[1], v[2]};
}

magrobin::ParamSurface parse_surface(const std::string& s) {
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : s.substr(colon + 1);
  if (kind == "sphere") {
    const std::vector<double> v = parse_list(args, "--surface sphere");
    if (v.size() != 1 || !(v[0] > 0)) throw UsageError("--surface sphere:R needs R>0");
    return magrobin::sphere(v[0]);
  }
  if (kind == "ellipsoid") {
    const std::vector<double> v = parse_list(args, "--surface ellipsoid");
    if (v.size() != 3 || !(v[0] > 0) || !(v[1] > 0) || !(v[2] > 0))
      throw UsageError("--surface ellipsoid:a,b,c needs three positive semi-axes");
    return magrobin::ellipsoid(v[0], v[1], v[2]);
  }
  throw UsageError("unknown surface '" + s + "' (use sphere:R or ellipsoid:a,b,c)");
}

magrobin::ChartPoint parse_point(const std::string& s, std::size_t n_charts) {
  int chart = 0;
  double y1 = 0, y2 = 0;
  if (std::sscanf(s.c_str(), "%d:%lf:%lf", &chart, &y1, &y2) != 3)
    throw UsageError("--point: expected chart:y1:y2, got '" + s + "'");
  if (chart < 0 || static_cast<std::size_t>(chart) >= n_charts)
    throw UsageError("--point: chart index out of range");
  return magrobin::ChartPoint{chart, y1, y2};
}

// ---------------------------------------------------------------------------
// fixtures: constants.txt lines `name = value  # oracle note`

struct Fixture {
  double value = 0.0;
  std::string note;
};

std::map<std::string, Fixture> load_fixtures(const fs::path& dir) {
  std::map<std::string, Fixture> out;
  std::ifstream f(dir / "constants.txt");
  if (!f) return out;
  std::string line;
  while (std::getline(f, line)) {
    std::string note;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      note = line.substr(hash + 1);
      while (!note.empty() && note.front() == ' ') note.erase(note.begin());
      line.resize(hash);
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string name = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (name.empty() || val.empty()) continue;
    try {
      out[name] = {std::stod(val), note};
    } catch (const std::exception&) {
    }
  }
  return out;
}

// minimizer locations sit in quadratically flat wells, so they re-solve about
// sqrt(eps) less sharply than the minimum values themselves
void compare_fixture(RunRecord& rec, const std::map<std::string, Fixture>& fx,
                     const fs::path& dir, const std::string& name, double computed,
                     double tol = 1e-6) {
  const auto it = fx.find(name);
  if (it == fx.end()) return;
  const double ref = it->second.value;
  const double rel = std::abs(computed - ref) / std::max(std::abs(ref), 1e-12);
  rec.fixtures.push_back({{"name", name},
                          {"value", ref},
                          {"computed", computed},
                          {"rel_delta", rel},
                          {"rel_tolerance", tol},
                          {"consistent", rel <= tol},
                          {"oracle", it->second.note},
                          {"source", (dir / "constants.txt").string()}});
}

// ---------------------------------------------------------------------------
// bounded worker pool for sweeps; cells land in index order regardless of
// completion order

int worker_count() {
  if (const char* env = std::getenv("MAGROBIN_WORKERS")) {
    const int v = std::atoi(env);
    if (v >= 1) return std::min(v, 64);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(std::min(hw, 8u)) : 1;
}

template <class F>
void parallel_cells(int n, F&& f) {
  const int w = std::min(worker_count(), n);
  if (w <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (int t = 0; t < w; ++t)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) f(i);
    });
  for (auto& th : pool) th.join();
}

struct CellErrors {
  std::vector<std::exception_ptr> eptr;
  std::vector<std::string> message;

  explicit CellErrors(int n) : eptr(n), message(n) {}

  template <class F>
  void run(int i, F&& f) {
    try {
      f();
    } catch (const magrobin::Error& e) {
      eptr[i] = std::current_exception();
      message[i] = e.what();
    }
  }
  int failed() const {
    int k = 0;
    for (const auto& p : eptr) k += p != nullptr;
    return k;
  }
  // all cells down: surface the first failure as the command's own error
  void rethrow_if_total(int n) const {
    if (n > 0 && failed() == n) std::rethrow_exception(eptr[0]);
  }
};

// ---------------------------------------------------------------------------
// commands

struct Common {
  std::string out = "magrobin_out";
  std::string fixtures;
  long seed = 0;
};

fs::path default_fixtures() {
#ifdef MAGROBIN_SOURCE_DIR
  return fs::path(MAGROBIN_SOURCE_DIR) / "fixtures";
#else
  return fs::path("fixtures");
#endif
}

void add_common(CLI::App* sub, Common& c) {
  // long-only help: the default -h alias would shadow the --h options below
  sub->set_help_flag("--help", "print help and exit");
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
  sub->add_option("--fixtures", c.fixtures, "fixtures directory (default: repo fixtures/)");
  sub->add_option("--seed", c.seed, "run seed, echoed into result.json")
      ->capture_default_str();
}

fs::path fixtures_dir(const Common& c) {
  return c.fixtures.empty() ? default_fixtures() : fs::path(c.fixtures);
}

int cmd_montgomery(const Common& c, int n, double half_width, const std::string& scan,
                   int scan_n) {
  if (n < 256) throw UsageError("--n: need at least 256 grid points");
  if (!(half_width > 0)) throw UsageError("--half-width must be positive");
  if (scan_n < 2) throw UsageError("--scan-n: need at least 2 points");
  const std::vector<double> win = parse_list(scan, "--scan");
  if (win.size() != 2 || !(win[0] < win[1]))
    throw UsageError("--scan: expected lo,hi with lo<hi");

  json cfg = {{"n", n},        {"half_width", half_width}, {"scan", scan},
              {"scan_n", scan_n}, {"seed", c.seed}};
  return guard(c.out, "montgomery", cfg, [&](RunRecord& rec) {
    const magrobin::ModelMinimum fine = magrobin::montgomery_min(n, half_width);
    const magrobin::ModelMinimum coarse = magrobin::montgomery_min(n / 2, half_width);
    const double stab = std::abs(fine.value - coarse.value) / fine.value;
    const double lam_lo = magrobin::montgomery_lambda(fine.minimizer - 0.1, half_width, n);
    const double lam_hi = magrobin::montgomery_lambda(fine.minimizer + 0.1, half_width, n);

    Table tmin{"montgomery_min",
               {{"nu0", "1", "measured"},
                {"zeta0", "1", "measured"},
                {"nu0_coarse_grid", "1", "measured"},
                {"rel_stability", "1", "derived"},
                {"lambda_left", "1", "measured"},
                {"lambda_right", "1", "measured"}}};
    tmin.add(fine.value, fine.minimizer, coarse.value, stab, lam_lo, lam_hi);
    rec.tables.push_back(std::move(tmin));

    Table tscan{"montgomery_scan", {{"zeta", "1", "pinned"}, {"lambda", "1", "measured"}}};
    for (int i = 0; i < scan_n; ++i) {
      const double z = win[0] + i * (win[1] - win[0]) / (scan_n - 1);
      tscan.add(z, magrobin::montgomery_lambda(z, half_width, n / 2));
    }
    rec.tables.push_back(std::move(tscan));

    rec.summary = {{"nu0", fine.value},
                   {"zeta0", fine.minimizer},
                   {"rel_stability", stab},
                   {"well_is_strict", lam_lo > fine.value && lam_hi > fine.value}};
    const auto fx = load_fixtures(fixtures_dir(c));
    compare_fixture(rec, fx, fixtures_dir(c), "nu0", fine.value);
    compare_fixture(rec, fx, fixtures_dir(c), "zeta0", fine.minimizer, 1e-4);
  });
}

int cmd_degennes(const Common& c, double T, int n) {
  if (!(T > 4)) throw UsageError("--T: domain too short");
  if (n < 256) throw UsageError("--n: need at least 256 grid points");
  json cfg = {{"T", T}, {"n", n}, {"seed", c.seed}};
  return guard(c.out, "degennes", cfg, [&](RunRecord& rec) {
    const magrobin::ModelMinimum fine = magrobin::degennes_theta0(T, n);
    const magrobin::ModelMinimum coarse = magrobin::degennes_theta0(T, n / 2);
    const double stab = std::abs(fine.value - coarse.value) / fine.value;

    Table t{"degennes",
            {{"theta0", "1", "measured"},
             {"xi0", "1", "measured"},
             {"theta0_coarse_grid", "1", "measured"},
             {"rel_stability", "1", "derived"}}};
    t.add(fine.value, fine.minimizer, coarse.value, stab);
    rec.tables.push_back(std::move(t));
    rec.summary = {{"theta0", fine.value}, {"xi0", fine.minimizer}, {"rel_stability", stab}};

    const auto fx = load_fixtures(fixtures_dir(c));
    compare_fixture(rec, fx, fixtures_dir(c), "theta0", fine.value);
    compare_fixture(rec, fx, fixtures_dir(c), "xi0", fine.minimizer, 1e-4);
  });
}

int cmd_robin1d(const Common& c, double kappa, double sigma, double c_star, double rho,
                const std::string& h_list) {
  const std::vector<double> hs = parse_list(h_list, "--h-list");
  require_positive(hs, "--h-list");
  require_decreasing(hs, "--h-list");
  if (hs.size() < 4) throw UsageError("--h-list: need at least 4 values");
  if (!(sigma > 0) || !(sigma < 2)) throw UsageError("--sigma must lie in (0,2)");
  if (!(c_star >= 0)) throw UsageError("--c-star must be non-negative");
  if (!(rho > 0) || !(rho < 0.5)) throw UsageError("--rho must lie in (0,1/2)");

  json cfg = {{"kappa", kappa}, {"sigma", sigma},        {"c_star", c_star},
              {"rho", rho},     {"h_list", json(hs)},    {"seed", c.seed}};
  return guard(c.out, "robin1d", cfg, [&](RunRecord& rec) {
    const magrobin::FitReport rep =
        magrobin::robin_transverse_expansion(kappa, c_star, sigma, hs, rho);

    Table ts{"robin1d_samples", {{"h", "1", "pinned"}, {"scaled_mu", "1", "measured"}}};
    for (const auto& s : rep.samples) ts.add(s.first, s.second);
    rec.tables.push_back(std::move(ts));

    Table tf{"robin1d_fit", {{"exponent", "1", "pinned"}, {"coefficient", "1", "measured"}}};
    for (std::size_t j = 0; j < rep.exponents.size(); ++j)
      tf.add(rep.exponents[j], rep.coefficients[j]);
    rec.tables.push_back(std::move(tf));

    json samples = json::array();
    for (const auto& s : rep.samples) samples.push_back({{"h", s.first}, {"value", s.second}});
    write_json(fs::path(c.out) / "fit_report.json",
               {{"kind", "robin1d"},
                {"kappa", kappa},
                {"sigma", sigma},
                {"exponents", rep.exponents},
                {"coefficients", rep.coefficients},
                {"residual", rep.residual},
                {"condition", rep.condition},
                {"samples", samples}});
    rec.summary = {{"coefficients", rep.coefficients},
                   {"residual", rep.residual},
                   {"condition", rep.condition}};
  });
}

int cmd_harmonic(const Common& c, const std::string& h_list, const std::string& m_list,
                 const std::string& xi_list, const std::string& eta_list, double half_width,
                 int n) {
  const std::vector<double> hs = parse_list(h_list, "--h");
  const std::vector<double> ms = parse_list(m_list, "--m");
  const std::vector<double> xis = parse_list(xi_list, "--xi");
  const std::vector<double> etas = parse_list(eta_list, "--eta");
  require_positive(hs, "--h");
  if (n < 256) throw UsageError("--n: need at least 256 grid points");
  if (!(half_width > 0)) throw UsageError("--half-width must be positive");

  json cfg = {{"h", json(hs)},           {"m", json(ms)}, {"xi", json(xis)},
              {"eta", json(etas)},       {"half_width", half_width},
              {"n", n},                  {"seed", c.seed}};
  return guard(c.out, "harmonic", cfg, [&](RunRecord& rec) {
    const int nc = static_cast<int>(hs.size() * ms.size() * xis.size() * etas.size());
    std::vector<magrobin::HarmonicGround> g(nc);
    CellErrors errs(nc);
    parallel_cells(nc, [&](int i) {
      errs.run(i, [&] {
        int r = i;
        const double eta = etas[r % etas.size()];
        r /= static_cast<int>(etas.size());
        const double xi = xis[r % xis.size()];
        r /= static_cast<int>(xis.size());
        const double m = ms[r % ms.size()];
        r /= static_cast<int>(ms.size());
        const double h = hs[r];
        g[i] = magrobin::harmonic_ground(h, m, xi, eta, half_width, n);
      });
    });
    errs.rethrow_if_total(nc);

    Table t{"harmonic",
            {{"h", "1", "pinned"},
             {"m", "1", "pinned"},
             {"xi", "1", "pinned"},
             {"eta", "1", "pinned"},
             {"lambda", "1", "measured"},
             {"degenerate_well", "flag", "measured"},
             {"status", "text", "derived"}}};
    for (int i = 0; i < nc; ++i) {
      int r = i;
      const double eta = etas[r % etas.size()];
      r /= static_cast<int>(etas.size());
      const double xi = xis[r % xis.size()];
      r /= static_cast<int>(xis.size());
      const double m = ms[r % ms.size()];
      r /= static_cast<int>(ms.size());
      const double h = hs[r];
      if (errs.eptr[i])
        t.add(h, m, xi, eta, std::string(), false, "error");
      else
        t.add(h, m, xi, eta, g[i].value, g[i].degenerate_well, "ok");
    }
    rec.tables.push_back(std::move(t));
    rec.summary = {{"cells", nc}, {"failed", errs.failed()}, {"workers", worker_count()}};
    if (errs.failed()) {
      json fails = json::array();
      for (int i = 0; i < nc; ++i)
        if (errs.eptr[i]) fails.push_back({{"cell", i}, {"message", errs.message[i]}});
      rec.summary["failures"] = fails;
    }
  });
}

int cmd_surface_scan(const Common& c, const std::string& surface, const std::string& field,
                     double gamma, double sigma, int nu, int nv) {
  const magrobin::ParamSurface surf = parse_surface(surface);
  const Eigen::Vector3d B = parse_vec3(field, "--field");
  if (!(gamma > 0)) throw UsageError("--gamma must be positive");
  if (!(sigma > 0)) throw UsageError("--sigma must be positive");
  if (nu < 8 || nv < 8) throw UsageError("--nu/--nv: need at least 8 samples per axis");

  json cfg = {{"surface", surface}, {"field", field}, {"gamma", gamma},
              {"sigma", sigma},     {"nu", nu},       {"nv", nv},
              {"seed", c.seed}};
  return guard(c.out, "surface-scan", cfg, [&](RunRecord& rec) {
    const magrobin::EffectiveBoundaryEnergy e =
        magrobin::effective_energy(surf, B, gamma, sigma);
    const double gs = std::pow(gamma, sigma);

    Table t{"surface_scan",
            {{"chart", "index", "pinned"},
             {"y1", "1", "pinned"},
             {"y2", "1", "pinned"},
             {"x", "1", "measured"},
             {"y", "1", "measured"},
             {"z", "1", "measured"},
             {"kappa", "1", "measured"},
             {"bn", "1", "measured"},
             {"energy", "1", "derived"}}};
    for (std::size_t ci = 0; ci < surf.charts.size(); ++ci) {
      const magrobin::Chart& ch = surf.charts[ci];
      for (int i = 0; i < nu; ++i) {
        const double y1 = ch.lo[0] + (i + 0.5) * (ch.hi[0] - ch.lo[0]) / nu;
        for (int j = 0; j < nv; ++j) {
          const double y2 = ch.lo[1] + (j + 0.5) * (ch.hi[1] - ch.lo[1]) / nv;
          const magrobin::CurvatureData cd =
              magrobin::curvature_at(surf, {static_cast<int>(ci), y1, y2});
          const double bn = std::abs(B.dot(cd.n));
          t.add(static_cast<int>(ci), y1, y2, cd.x[0], cd.x[1], cd.x[2], cd.kappa, bn,
                bn * gs - 2.0 * cd.kappa * gamma);
        }
      }
    }
    rec.tables.push_back(std::move(t));

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> hess(e.hessian);
    rec.summary = {{"minimum", e.value},
                   {"minimizer",
                    {{"chart", e.minimizer.chart},
                     {"y1", e.minimizer.y1},
                     {"y2", e.minimizer.y2},
                     {"x", {e.x0[0], e.x0[1], e.x0[2]}}}},
                   {"hessian_eigenvalues", {hess.eigenvalues()[0], hess.eigenvalues()[1]}},
                   {"degenerate", e.degenerate}};
    try {
      const magrobin::CurvatureData cd0 = magrobin::curvature_at(surf, e.minimizer);
      rec.summary["c0"] =
          magrobin::c0_from_hessian(e.hessian, std::abs(B.dot(cd0.n)) * gs);
    } catch (const magrobin::AssumptionViolated& ex) {
      rec.summary["c0"] = nullptr;
      rec.summary["c0_note"] = ex.what();
    }
  });
}

int cmd_effective2d(const Common& c, const std::string& surface, const std::string& field,
                    const std::string& point, double h, const std::string& extent,
                    double delta, int n1, int n2, int k, bool trial, double sigma,
                    double rho_exp) {
  const magrobin::ParamSurface surf = parse_surface(surface);
  const Eigen::Vector3d B = parse_vec3(field, "--field");
  const magrobin::ChartPoint pt = parse_point(point, surf.charts.size());
  const std::vector<double> ext = parse_list(extent, "--extent");
  if (ext.size() != 2 || !(ext[0] > 0) || !(ext[1] > 0))
    throw UsageError("--extent: expected two positive half-widths");
  if (!(h > 0)) throw UsageError("--h must be positive");
  if (!(delta > 0)) throw UsageError("--delta must be positive");
  if (n1 < 7 || n2 < 7) throw UsageError("--n1/--n2: need at least 7 nodes per axis");
  if (k < 1) throw UsageError("--k: need at least one eigenvalue");
  if (trial) {
    if (!(sigma > 0)) throw UsageError("--sigma must be positive");
    if (!(rho_exp > 0) || !(rho_exp < 0.5)) throw UsageError("--rho-exp must lie in (0,1/2)");
  }

  json cfg = {{"surface", surface}, {"field", field},   {"point", point},
              {"h", h},             {"extent", extent}, {"delta", delta},
              {"n1", n1},           {"n2", n2},         {"k", k},
              {"trial", trial},     {"sigma", sigma},   {"rho_exp", rho_exp},
              {"seed", c.seed}};
  return guard(c.out, "effective2d", cfg, [&](RunRecord& rec) {
    magrobin::ChartOptions opts;
    opts.n1 = n1;
    opts.n2 = n2;
    // symmetric gauge centered on the chart: curl(A) = B
    const Eigen::Vector3d xc = magrobin::curvature_at(surf, pt).x;
    const magrobin::FieldFn A = [B, xc](const Eigen::Vector3d& x) {
      return (0.5 * B.cross(x - xc)).eval();
    };
    const magrobin::ChartData chart =
        magrobin::build_chart(surf, pt, {ext[0], ext[1]}, A, B, h, delta, opts);
    const magrobin::EffectiveCoefficients co = magrobin::assemble_coefficients(chart);
    const magrobin::Spectrum sp = magrobin::effective_spectrum(co, chart, k);

    Table tm{"effective_modes",
             {{"index", "index", "pinned"},
              {"eigenvalue", "1", "measured"},
              {"residual", "1", "measured"}}};
    for (std::size_t i = 0; i < sp.eigenvalues.size(); ++i)
      tm.add(static_cast<int>(i), sp.eigenvalues[i], sp.residuals[i]);
    rec.tables.push_back(std::move(tm));

    double bmax = 0, cmax = 0, rmax = 0;
    for (int p = 0; p < chart.points(); ++p) {
      bmax = std::max({bmax, std::abs(co.b11[p]), std::abs(co.b12[p]), std::abs(co.b21[p]),
                       std::abs(co.b22[p])});
      cmax = std::max({cmax, std::abs(co.c11[p]), std::abs(co.c12[p]), std::abs(co.c22[p])});
      rmax = std::max(rmax, std::abs(co.rho[p]));
    }
    Table tc{"effective_coeff_summary",
             {{"quantity", "text", "pinned"}, {"value", "1", "measured"}}};
    tc.add("beta_max_abs", bmax);
    tc.add("gamma_max_abs", cmax);
    tc.add("rho_max_abs", rmax);
    tc.add("mu_min", co.mu.minCoeff());
    tc.add("mu_max", co.mu.maxCoeff());
    rec.tables.push_back(std::move(tc));

    rec.summary = {{"solver", sp.meta.solver},
                   {"iterations", sp.meta.iterations},
                   {"shift", sp.meta.shift},
                   {"grid", sp.meta.grid},
                   {"surface_points", chart.points()},
                   {"collar_nodes", chart.nt()},
                   {"ground_energy", sp.eigenvalues.empty() ? json() : json(sp.eigenvalues[0])}};
    if (trial) {
      const double v = magrobin::variational_upper_bound(surf, B, pt, h, sigma, rho_exp);
      rec.summary["trial_upper_bound"] = v;
    }
  });
}

int cmd_ball(const Common& c, const std::string& regime, const std::string& h_list,
             const std::string& b_list, int n_r, int n_theta) {
  magrobin::BallRegime reg;
  if (regime == "critical")
    reg = magrobin::BallRegime::Critical;
  else if (regime == "h-bounded")
    reg = magrobin::BallRegime::HBounded;
  else
    throw UsageError("--regime: expected critical or h-bounded");
  const std::vector<double> hs = parse_list(h_list, "--h");
  const std::vector<double> bs = parse_list(b_list, "--b");
  require_positive(hs, "--h");
  for (double b : bs)
    if (!(b >= 0)) throw UsageError("--b: values must be non-negative");
  if (n_r && n_r < 8) throw UsageError("--n-r: need at least 8 radial nodes");
  if (n_theta && n_theta < 16) throw UsageError("--n-theta: need at least 16 polar nodes");

  json cfg = {{"regime", regime}, {"h", json(hs)},      {"b", json(bs)},
              {"n_r", n_r},       {"n_theta", n_theta}, {"seed", c.seed}};
  return guard(c.out, "ball", cfg, [&](RunRecord& rec) {
    const int nb = static_cast<int>(bs.size());
    const int nc = static_cast<int>(hs.size()) * nb;
    std::vector<magrobin::BallGround> g(nc);
    CellErrors errs(nc);
    parallel_cells(nc, [&](int i) {
      errs.run(i, [&] {
        magrobin::BallProblem p = magrobin::make_ball(reg, hs[i / nb], bs[i % nb]);
        if (n_r) p.n_r = n_r;
        if (n_theta) p.n_theta = n_theta;
        g[i] = magrobin::ball_ground(p);
      });
    });
    errs.rethrow_if_total(nc);

    Table t{"ball_sweep",
            {{"h", "1", "pinned"},
             {"b", "1", "pinned"},
             {"energy", "1", "measured"},
             {"m_star", "index", "measured"},
             {"window_lo", "index", "measured"},
             {"window_hi", "index", "measured"},
             {"status", "text", "derived"}}};
    json cells = json::array();
    for (int i = 0; i < nc; ++i) {
      const double h = hs[i / nb], b = bs[i % nb];
      if (errs.eptr[i]) {
        t.add(h, b, std::string(), std::string(), std::string(), std::string(), "error");
        cells.push_back({{"h", h}, {"b", b}, {"status", "error"}, {"message", errs.message[i]}});
      } else {
        t.add(h, b, g[i].energy, g[i].m_star, g[i].window_lo, g[i].window_hi, "ok");
        cells.push_back({{"h", h},
                         {"b", b},
                         {"status", "ok"},
                         {"energy", g[i].energy},
                         {"m_star", g[i].m_star},
                         {"window", {g[i].window_lo, g[i].window_hi}},
                         {"margin", g[i].margin},
                         {"grid", g[i].grid}});
      }
    }
    rec.tables.push_back(std::move(t));
    rec.summary = {{"cells", cells}, {"failed", errs.failed()}, {"workers", worker_count()}};
  });
}

int cmd_sphere_modes(const Common& c, const std::string& b_range, const std::string& m_window,
                     int n_theta, const std::string& h_list, double b_fixed,
                     const std::string& regime, const std::string& m_list) {
  if (b_range.empty() == h_list.empty())
    throw UsageError("give exactly one of --b-range (angular family) or --h-list (ball family)");
  if (n_theta < 64) throw UsageError("--n-theta: need at least 64 nodes");

  if (!b_range.empty()) {
    const std::vector<double> bs = parse_range(b_range, "--b-range");
    for (double b : bs)
      if (!(b >= 0)) throw UsageError("--b-range: values must be non-negative");
    int mlo = 0, mhi = 0;
    if (m_window == "auto") {
      mhi = static_cast<int>(std::ceil(bs.back() / 2.0)) + 3;
    } else if (std::sscanf(m_window.c_str(), "%d:%d", &mlo, &mhi) != 2 || mhi < mlo) {
      throw UsageError("--m-window: expected auto or lo:hi");
    }

    json cfg = {{"b_range", b_range}, {"m_window", m_window}, {"n_theta", n_theta},
                {"seed", c.seed}};
    return guard(c.out, "sphere-modes", cfg, [&](RunRecord& rec) {
      Eigen::VectorXd bv(bs.size());
      for (std::size_t i = 0; i < bs.size(); ++i) bv[static_cast<int>(i)] = bs[i];
      const int nm = mhi - mlo + 1;
      std::vector<magrobin::ModeCurve> curves(nm);
      CellErrors errs(nm);
      parallel_cells(nm, [&](int i) {
        errs.run(i, [&] { curves[i] = magrobin::angular_mode_curve(mlo + i, bv, n_theta); });
      });
      errs.rethrow_if_total(nm);
      if (errs.failed()) std::rethrow_exception(errs.eptr[0]);  // family must be complete

      Table t{"mode_curves",
              {{"b_or_h", "1", "pinned"}, {"m", "index", "pinned"}, {"lambda", "1", "measured"}}};
      for (const magrobin::ModeCurve& mc : curves)
        for (int i = 0; i < mc.parameter.size(); ++i) t.add(mc.parameter[i], mc.m, mc.values[i]);
      rec.tables.push_back(std::move(t));

      // lower envelope of the emitted family
      Table te{"effective_curve",
               {{"b", "1", "pinned"}, {"e", "1", "derived"}, {"m_star", "index", "derived"}}};
      for (std::size_t i = 0; i < bs.size(); ++i) {
        double best = curves[0].values[static_cast<int>(i)];
        int mstar = mlo;
        for (int j = 1; j < nm; ++j)
          if (curves[j].values[static_cast<int>(i)] < best) {
            best = curves[j].values[static_cast<int>(i)];
            mstar = mlo + j;
          }
        te.add(bs[i], best, mstar);
      }
      rec.tables.push_back(std::move(te));
      rec.summary = {{"axis", "b"}, {"m_window", {mlo, mhi}}, {"workers", worker_count()}};
    });
  }

  magrobin::BallRegime reg;
  if (regime == "critical")
    reg = magrobin::BallRegime::Critical;
  else if (regime == "h-bounded")
    reg = magrobin::BallRegime::HBounded;
  else
    throw UsageError("--regime: expected critical or h-bounded");
  const std::vector<double> hs = parse_list(h_list, "--h-list");
  require_positive(hs, "--h-list");
  if (!(b_fixed >= 0)) throw UsageError("--b must be non-negative");
  const std::vector<double> msd = parse_list(m_list, "--m-list");
  std::vector<int> ms;
  for (double m : msd) {
    if (m != std::floor(m)) throw UsageError("--m-list: integer modes only");
    ms.push_back(static_cast<int>(m));
  }

  json cfg = {{"h_list", json(hs)}, {"b", b_fixed}, {"regime", regime},
              {"m_list", json(ms)}, {"seed", c.seed}};
  return guard(c.out, "sphere-modes", cfg, [&](RunRecord& rec) {
    Eigen::VectorXd hv(hs.size());
    for (std::size_t i = 0; i < hs.size(); ++i) hv[static_cast<int>(i)] = hs[i];
    const int nm = static_cast<int>(ms.size());
    std::vector<magrobin::ModeCurve> curves(nm);
    CellErrors errs(nm);
    parallel_cells(nm, [&](int i) {
      errs.run(i, [&] { curves[i] = magrobin::ball_mode_curve(reg, b_fixed, ms[i], hv); });
    });
    errs.rethrow_if_total(nm);
    if (errs.failed()) std::rethrow_exception(errs.eptr[0]);

    Table t{"mode_curves",
            {{"b_or_h", "1", "pinned"}, {"m", "index", "pinned"}, {"lambda", "1", "measured"}}};
    for (const magrobin::ModeCurve& mc : curves)
      for (int i = 0; i < mc.parameter.size(); ++i) t.add(mc.parameter[i], mc.m, mc.values[i]);
    rec.tables.push_back(std::move(t));
    rec.summary = {{"axis", "h"}, {"b", b_fixed}, {"workers", worker_count()}};
  });
}

int cmd_verify(const Common& c, const std::string& regime, double b,
               const std::string& h_list) {
  magrobin::BallRegime reg;
  if (regime == "critical")
    reg = magrobin::BallRegime::Critical;
  else if (regime == "h-bounded")
    reg = magrobin::BallRegime::HBounded;
  else
    throw UsageError("--regime: expected critical or h-bounded");
  if (!(b >= 0)) throw UsageError("--b must be non-negative");
  const std::vector<double> hs = parse_list(h_list, "--h");
  require_positive(hs, "--h");
  require_decreasing(hs, "--h");
  if (hs.size() < 4) throw UsageError("--h: need at least 4 values for a 3-term fit");

  json cfg = {{"regime", regime}, {"b", b}, {"h", json(hs)}, {"seed", c.seed}};
  return guard(c.out, "verify", cfg, [&](RunRecord& rec) {
    const magrobin::RegimeFit rf = magrobin::verify_regime(reg, b, hs);

    Table ts{"verify_samples",
             {{"h", "1", "pinned"},
              {"energy", "1", "measured"},
              {"m_star", "index", "measured"}}};
    for (std::size_t i = 0; i < rf.h_values.size(); ++i)
      ts.add(rf.h_values[i], rf.energies[i], rf.m_stars[i]);
    rec.tables.push_back(std::move(ts));

    Table tf{"verify_fit",
             {{"exponent", "1", "pinned"},
              {"coefficient", "1", "measured"},
              {"target", "1", "derived"}}};
    for (std::size_t j = 0; j < rf.fit.exponents.size(); ++j)
      tf.add(rf.fit.exponents[j], rf.fit.coefficients[j], rf.targets[j]);
    rec.tables.push_back(std::move(tf));

    json samples = json::array();
    for (std::size_t i = 0; i < rf.h_values.size(); ++i)
      samples.push_back({{"h", rf.h_values[i]},
                         {"energy", rf.energies[i]},
                         {"m_star", rf.m_stars[i]},
                         {"grid", rf.grids[i]}});
    write_json(fs::path(c.out) / "fit_report.json",
               {{"kind", "ball_regime"},
                {"regime", magrobin::regime_name(rf.regime)},
                {"b", rf.b},
                {"exponents", rf.fit.exponents},
                {"coefficients", rf.fit.coefficients},
                {"targets", rf.targets},
                {"residual", rf.fit.residual},
                {"condition", rf.fit.condition},
                {"samples", samples},
                {"notes", rf.notes}});
    rec.summary = {{"coefficients", rf.fit.coefficients},
                   {"targets", rf.targets},
                   {"residual", rf.fit.residual},
                   {"notes", rf.notes}};
    rec.fixtures.push_back(
        {{"name", reg == magrobin::BallRegime::Critical ? "nu0" : "e_b"},
         {"value", rf.targets[2]},
         {"source", "in-process oracle"},
         {"oracle", reg == magrobin::BallRegime::Critical
                        ? "flat-well minimum, Richardson-extrapolated FD grids"
                        : "angular-mode lower envelope at the requested b"}});
  });
}

int cmd_fixtures_build(const Common& c) {
  const fs::path dir = fixtures_dir(c);
  json cfg = {{"fixtures", dir.string()}, {"seed", c.seed}};
  return guard(c.out, "fixtures-build", cfg, [&](RunRecord& rec) {
    fs::create_directories(dir);

    const magrobin::FlatWellProfile& prof = magrobin::flat_well_profile();
    const magrobin::ModelMinimum mont_coarse = magrobin::montgomery_min(2000, 12.0);
    const double mont_stab = std::abs(prof.nu0 - mont_coarse.value) / prof.nu0;
    const magrobin::ModelMinimum dg = magrobin::degennes_theta0();
    const magrobin::ModelMinimum dg_coarse = magrobin::degennes_theta0(24.0, 3000);
    const double dg_stab = std::abs(dg.value - dg_coarse.value) / dg.value;
    const magrobin::EffectiveEigenvalue e2 = magrobin::e_of_b(2.0);

    {
      std::ofstream f(dir / "constants.txt", std::ios::binary);
      if (!f) throw UsageError("cannot write " + (dir / "constants.txt").string());
      f << "# derived constants; regenerate with `magrobin_cli fixtures-build`\n";
      f << "# name = value  # oracle\n";
      f << "nu0 = " << num(prof.nu0)
        << "  # flat angular well min over offset, scan [-4,1]; FD grids n={1000,2000,4000},"
           " Richardson order 2; rel stability vs half grids " << num(mont_stab) << "\n";
      f << "zeta0 = " << num(prof.zeta0) << "  # minimizing offset of the same scan\n";
      f << "theta0 = " << num(dg.value)
        << "  # half-line Neumann oscillator min over center, T=24; n={1500,3000,6000},"
           " Richardson order 2; rel stability vs half grids " << num(dg_stab) << "\n";
      f << "xi0 = " << num(dg.minimizer) << "  # minimizing center of the same scan\n";
      f << "e_b2 = " << num(e2.value)
        << "  # angular-mode lower envelope at b=2, n_theta=512, adaptive window; m_star="
        << e2.m_star << "\n";
    }

    Table t{"montgomery_groundstate",
            {{"s", "1", "pinned"}, {"f", "1", "derived"}, {"df", "1", "derived"}}};
    for (int i = 0; i < prof.s.size(); ++i) t.add(prof.s[i], prof.f[i], prof.df[i]);
    write_csv(dir, t);  // lives with the constants, not in --out

    rec.fixtures = json::array(
        {{{"name", "nu0"}, {"value", prof.nu0}, {"rel_stability", mont_stab}},
         {{"name", "zeta0"}, {"value", prof.zeta0}},
         {{"name", "theta0"}, {"value", dg.value}, {"rel_stability", dg_stab}},
         {{"name", "xi0"}, {"value", dg.minimizer}},
         {{"name", "e_b2"}, {"value", e2.value}, {"m_star", e2.m_star}}});
    rec.summary = {{"constants", (dir / "constants.txt").string()},
                   {"groundstate_table", (dir / "montgomery_groundstate.csv").string()},
                   {"groundstate_rows", static_cast<int>(prof.s.size())}};
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectral toolkit for the magnetic Robin Laplacian on smooth domains"};
  app.require_subcommand(1);
  int rc = 0;

  Common c_mont;
  int mont_n = 4000, mont_scan_n = 36;
  double mont_hw = 12.0;
  std::string mont_scan = "-2.5,1.0";
  CLI::App* mont = app.add_subcommand("montgomery", "flat angular well: minimum and scan");
  add_common(mont, c_mont);
  mont->add_option("--n", mont_n, "finest FD grid")->capture_default_str();
  mont->add_option("--half-width", mont_hw, "initial well half width")->capture_default_str();
  mont->add_option("--scan", mont_scan, "offset scan window lo,hi")->capture_default_str();
  mont->add_option("--scan-n", mont_scan_n, "scan samples")->capture_default_str();
  mont->callback([&] { rc = cmd_montgomery(c_mont, mont_n, mont_hw, mont_scan, mont_scan_n); });

  Common c_dg;
  double dg_T = 24.0;
  int dg_n = 6000;
  CLI::App* dg = app.add_subcommand("degennes", "half-line oscillator constant");
  add_common(dg, c_dg);
  dg->add_option("--T", dg_T, "domain length")->capture_default_str();
  dg->add_option("--n", dg_n, "finest FD grid")->capture_default_str();
  dg->callback([&] { rc = cmd_degennes(c_dg, dg_T, dg_n); });

  Common c_rob;
  double rob_kappa = 1.0, rob_sigma = 1.0, rob_cstar = 0.0, rob_rho = 0.3;
  std::string rob_h;
  CLI::App* rob = app.add_subcommand("robin1d", "boundary-layer transverse expansion");
  add_common(rob, c_rob);
  rob->add_option("--kappa", rob_kappa, "mean curvature")->capture_default_str();
  rob->add_option("--sigma", rob_sigma, "coupling exponent in (0,2)")->capture_default_str();
  rob->add_option("--c-star", rob_cstar, "quadratic weight bound")->capture_default_str();
  rob->add_option("--rho", rob_rho, "layer truncation exponent")->capture_default_str();
  rob->add_option("--h-list", rob_h, "decreasing h values, comma separated")->required();
  rob->callback(
      [&] { rc = cmd_robin1d(c_rob, rob_kappa, rob_sigma, rob_cstar, rob_rho, rob_h); });

  Common c_har;
  std::string har_h, har_m = "0", har_xi = "0", har_eta;
  double har_hw = 10.0;
  int har_n = 2048;
  CLI::App* har = app.add_subcommand("harmonic", "shifted oscillator family sweep");
  add_common(har, c_har);
  har->add_option("--h", har_h, "h values, comma separated")->required();
  har->add_option("--m", har_m, "momentum shifts")->capture_default_str();
  har->add_option("--xi", har_xi, "center offsets")->capture_default_str();
  har->add_option("--eta", har_eta, "slope values")->required();
  har->add_option("--half-width", har_hw, "initial well half width")->capture_default_str();
  har->add_option("--n", har_n, "finest FD grid")->capture_default_str();
  har->callback([&] { rc = cmd_harmonic(c_har, har_h, har_m, har_xi, har_eta, har_hw, har_n); });

  Common c_scan;
  std::string scan_surface, scan_field;
  double scan_gamma = 1.0, scan_sigma = 1.0;
  int scan_nu = 41, scan_nv = 81;
  CLI::App* scan = app.add_subcommand("surface-scan", "boundary energy landscape and minimum");
  add_common(scan, c_scan);
  scan->add_option("--surface", scan_surface, "sphere:R or ellipsoid:a,b,c")->required();
  scan->add_option("--field", scan_field, "constant field bx,by,bz")->required();
  scan->add_option("--gamma", scan_gamma, "Robin strength")->capture_default_str();
  scan->add_option("--sigma", scan_sigma, "field coupling exponent")->capture_default_str();
  scan->add_option("--nu", scan_nu, "samples along y1")->capture_default_str();
  scan->add_option("--nv", scan_nv, "samples along y2")->capture_default_str();
  scan->callback([&] {
    rc = cmd_surface_scan(c_scan, scan_surface, scan_field, scan_gamma, scan_sigma, scan_nu,
                          scan_nv);
  });

  Common c_eff;
  std::string eff_surface, eff_field, eff_point, eff_extent = "0.15,0.15";
  double eff_h = 0.02, eff_delta = 0.25, eff_sigma = 1.0, eff_rho = 0.4;
  int eff_n1 = 21, eff_n2 = 0, eff_k = 3;
  bool eff_trial = false;
  CLI::App* eff = app.add_subcommand("effective2d", "surface-operator spectrum on a chart");
  add_common(eff, c_eff);
  eff->add_option("--surface", eff_surface, "sphere:R or ellipsoid:a,b,c")->required();
  eff->add_option("--field", eff_field, "constant field bx,by,bz")->required();
  eff->add_option("--point", eff_point, "chart:y1:y2 center")->required();
  eff->add_option("--h", eff_h, "semiclassical parameter")->required();
  eff->add_option("--extent", eff_extent, "chart half widths e1,e2")->capture_default_str();
  eff->add_option("--delta", eff_delta, "collar depth")->capture_default_str();
  eff->add_option("--n1", eff_n1, "tangential nodes along y1")->capture_default_str();
  eff->add_option("--n2", eff_n2, "tangential nodes along y2 (0: same as n1)");
  eff->add_option("--k", eff_k, "eigenvalues to compute")->capture_default_str();
  eff->add_flag("--trial", eff_trial, "also evaluate the boundary-layer trial bound");
  eff->add_option("--sigma", eff_sigma, "coupling exponent for --trial")->capture_default_str();
  eff->add_option("--rho-exp", eff_rho, "cutoff exponent for --trial")->capture_default_str();
  eff->callback([&] {
    rc = cmd_effective2d(c_eff, eff_surface, eff_field, eff_point, eff_h, eff_extent,
                         eff_delta, eff_n1, eff_n2 > 0 ? eff_n2 : eff_n1, eff_k, eff_trial,
                         eff_sigma, eff_rho);
  });

  Common c_ball;
  std::string ball_regime = "critical", ball_h, ball_b;
  int ball_nr = 0, ball_ntheta = 0;
  CLI::App* ball = app.add_subcommand("ball", "ground energy sweep over an h x b grid");
  add_common(ball, c_ball);
  ball->add_option("--regime", ball_regime, "critical or h-bounded")->capture_default_str();
  ball->add_option("--h", ball_h, "h values, comma separated")->required();
  ball->add_option("--b", ball_b, "field strengths, comma separated")->required();
  ball->add_option("--n-r", ball_nr, "radial nodes override (0: regime default)");
  ball->add_option("--n-theta", ball_ntheta, "polar nodes override (0: regime default)");
  ball->callback(
      [&] { rc = cmd_ball(c_ball, ball_regime, ball_h, ball_b, ball_nr, ball_ntheta); });

  Common c_modes;
  std::string modes_brange, modes_mwin = "auto", modes_hlist, modes_regime = "h-bounded",
              modes_mlist = "0,1,2";
  int modes_ntheta = 512;
  double modes_b = 1.0;
  CLI::App* modes = app.add_subcommand("sphere-modes", "angular/ball mode curve families");
  add_common(modes, c_modes);
  modes->add_option("--b-range", modes_brange, "lo:hi:step for the angular family");
  modes->add_option("--m-window", modes_mwin, "auto or lo:hi")->capture_default_str();
  modes->add_option("--n-theta", modes_ntheta, "polar grid")->capture_default_str();
  modes->add_option("--h-list", modes_hlist, "h values for the ball family");
  modes->add_option("--b", modes_b, "field strength for the ball family")
      ->capture_default_str();
  modes->add_option("--regime", modes_regime, "critical or h-bounded (ball family)")
      ->capture_default_str();
  modes->add_option("--m-list", modes_mlist, "modes for the ball family")
      ->capture_default_str();
  modes->callback([&] {
    rc = cmd_sphere_modes(c_modes, modes_brange, modes_mwin, modes_ntheta, modes_hlist,
                          modes_b, modes_regime, modes_mlist);
  });

  Common c_ver;
  std::string ver_regime, ver_h;
  double ver_b = 1.0;
  CLI::App* ver = app.add_subcommand("verify", "fit a ground-energy sweep against its regime");
  add_common(ver, c_ver);
  ver->add_option("--regime", ver_regime, "critical or h-bounded")->required();
  ver->add_option("--b", ver_b, "field strength")->required();
  ver->add_option("--h", ver_h, "decreasing h values, comma separated")->required();
  ver->callback([&] { rc = cmd_verify(c_ver, ver_regime, ver_b, ver_h); });

  Common c_fix;
  CLI::App* fix = app.add_subcommand("fixtures-build", "regenerate derived constants");
  add_common(fix, c_fix);
  fix->callback([&] { rc = cmd_fixtures_build(c_fix); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return rc;
}
