#pragma once

// Experiment drivers: dimensions, convergence, preconditioner and cut-position
// sweeps, the beta = 0 ablation, and the constant-verification report.

#include "cutfem/assembly.hpp"
#include "cutfem/precond.hpp"
#include "cutfem/verify.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace cutfem {

struct ExperimentConfig {
    double half_width = 1.5;
    int subdivisions = 4;
    Vec3 x0{0.001, 0.002, 0.003};
    double radius = 1.0;
    std::vector<int> levels{0, 1, 2, 3, 4};
    int sweep_level = 3;
    double gamma = 10.0;
    double beta = 0.1;
    LengthScale length_scale = LengthScale::GridSpacing;
    std::vector<double> deltas{0.0, 0.01, 0.02, 0.03, 0.04, 0.05};
    double tol = 1e-6;
    int maxit = 2000;
    std::vector<std::string> preconditioners{"sgs", "pa", "pd", "pb"};
    std::string out = "results";
    std::uint64_t seed = 12345;
    int jobs = 1;
    int samples = 100;
    bool deep = false;

    NitscheParams params() const { return {gamma, beta, 1, length_scale}; }
    Lattice lattice(int level) const { return {level, subdivisions, half_width}; }
    static Vec3 shifted_center(double delta) { return {delta, 2.0 * delta, 3.0 * delta}; }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw Error("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

}  // namespace detail

/// Parses "0..4" or "0,2,3".
inline std::vector<int> parse_levels(const std::string& s) {
    const auto dots = s.find("..");
    std::vector<int> out;
    if (dots != std::string::npos) {
        const int lo = int(detail::parse_double("levels", detail::trim(s.substr(0, dots))));
        const int hi = int(detail::parse_double("levels", detail::trim(s.substr(dots + 2))));
        if (lo < 0 || hi < lo) throw Error("config: bad level range '" + s + "'");
        for (int l = lo; l <= hi; ++l) out.push_back(l);
    } else {
        for (const auto& t : detail::split_list(s)) out.push_back(int(detail::parse_double("levels", t)));
    }
    if (out.empty()) throw Error("config: empty level list");
    for (int l : out)
        if (l < 0) throw Error("config: negative level");
    return out;
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& s) {
    std::vector<double> out;
    for (const auto& t : detail::split_list(s)) out.push_back(detail::parse_double(key, t));
    return out;
}

/// Applies one key = value setting.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
    const auto num = [&] { return detail::parse_double(key, value); };
    if (key == "half_width") c.half_width = num();
    else if (key == "subdivisions") c.subdivisions = int(num());
    else if (key == "x0") {
        const auto v = parse_doubles(key, value);
        if (v.size() != 3) throw Error("config: x0 needs three components");
        c.x0 = Vec3(v[0], v[1], v[2]);
    } else if (key == "radius") c.radius = num();
    else if (key == "levels") c.levels = parse_levels(value);
    else if (key == "sweep_level") c.sweep_level = int(num());
    else if (key == "gamma") c.gamma = num();
    else if (key == "beta") c.beta = num();
    else if (key == "length_scale") {
        if (value == "spacing") c.length_scale = LengthScale::GridSpacing;
        else if (value == "diameter") c.length_scale = LengthScale::Diameter;
        else throw Error("config: length_scale must be 'spacing' or 'diameter'");
    } else if (key == "deltas") c.deltas = parse_doubles(key, value);
    else if (key == "tol") c.tol = num();
    else if (key == "maxit") c.maxit = int(num());
    else if (key == "precond") c.preconditioners = detail::split_list(value);
    else if (key == "out") c.out = value;
    else if (key == "seed") c.seed = std::uint64_t(num());
    else if (key == "jobs") c.jobs = int(num());
    else if (key == "samples") c.samples = int(num());
    else if (key == "deep") c.deep = value == "1" || value == "true" || value == "yes";
    else throw Error("config: unknown key '" + key + "'");
}

/// Reads a flat key = value file; '#' starts a comment.
inline void load_config(ExperimentConfig& c, std::istream& is) {
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
        apply_setting(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
}

inline void load_config(ExperimentConfig& c, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open config file " + path);
    load_config(c, is);
}

/// Runs f(0..n-1) on up to `jobs` threads; results are stored by index.
template <typename F>
auto parallel_map(std::size_t n, int jobs, F&& f) -> std::vector<decltype(f(std::size_t{}))> {
    std::vector<decltype(f(std::size_t{}))> out(n);
    const auto workers = std::size_t(std::clamp(jobs, 1, int(std::max<std::size_t>(n, 1))));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    out[i] = f(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

// ---------------------------------------------------------------------------
// Problem instances

struct Instance {
    int level = 0;
    Vec3 x0;
    ActiveMesh mesh;
    SubspaceSplit split;
    AssembledSystem system;
};

inline Instance make_instance(const ExperimentConfig& c, int level, const Vec3& x0, const NitscheParams& p) {
    const LevelSet ls(x0, c.radius);
    ActiveMesh mesh = build_active_mesh(c.lattice(level), ls);
    SubspaceSplit split = classify_dofs(mesh);
    if (!validate_assumption(mesh, split))
        std::cerr << "warning: level " << level << ": strip differs from the cells touching the active boundary\n";
    AssembledSystem sys = assemble_system(mesh, split, p, ManufacturedSolution{x0});
    return {level, x0, std::move(mesh), std::move(split), std::move(sys)};
}

inline Instance make_instance(const ExperimentConfig& c, int level, const Vec3& x0) {
    return make_instance(c, level, x0, c.params());
}

// ---------------------------------------------------------------------------
// Tables

struct DimsRow {
    int level = 0;
    std::size_t N0 = 0, N1 = 0;
    bool assumption = true;
};

inline std::vector<DimsRow> run_dims(const ExperimentConfig& c) {
    return parallel_map(c.levels.size(), c.jobs, [&](std::size_t i) {
        const int l = c.levels[i];
        const ActiveMesh mesh = build_active_mesh(c.lattice(l), LevelSet(c.x0, c.radius));
        const SubspaceSplit split = classify_dofs(mesh);
        return DimsRow{l, split.N0(), split.N1(), validate_assumption(mesh, split)};
    });
}

struct ConvergenceRow {
    int level = 0;
    std::size_t N = 0;
    ErrorNorms errors;
    std::optional<double> l2_order, h1_order;
    bool solved = true;
};

/// Solves to well below the discretization error: Cholesky, or P_B-preconditioned CG for large systems.
inline std::pair<Vector, bool> solve_accurately(const Instance& inst) {
    if (inst.split.N() <= kCholeskyLimit) return {SparseCholesky(inst.system.A).solve(inst.system.b), true};
    BlockPreconditioner pb(PreconditionerSpec::pb(), inst.system.A, inst.split, &inst.mesh);
    auto [u, rep] = pcg(inst.system.A, inst.system.b, pb.as_function(), 1e-10, 5000);
    return {u, rep.converged};
}

inline std::vector<ConvergenceRow> run_convergence(const ExperimentConfig& c) {
    auto rows = parallel_map(c.levels.size(), c.jobs, [&](std::size_t i) {
        const Instance inst = make_instance(c, c.levels[i], c.x0);
        ConvergenceRow r;
        r.level = inst.level;
        r.N = inst.split.N();
        auto [u, ok] = solve_accurately(inst);
        r.solved = ok;
        r.errors = compute_errors(inst.mesh, inst.split, u, ManufacturedSolution{c.x0});
        return r;
    });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].level != rows[i - 1].level + 1) continue;
        rows[i].l2_order = std::log2(rows[i - 1].errors.l2 / rows[i].errors.l2);
        rows[i].h1_order = std::log2(rows[i - 1].errors.h1_semi / rows[i].errors.h1_semi);
    }
    return rows;
}

struct PrecondResult {
    std::string name;
    int iterations = -1;
    bool converged = false;
    double kappa = 0.0;  // from the CG tridiagonal
    std::string error;
};

struct PrecondRow {
    int level = 0;
    double delta = 0.0;
    double beta = 0.0;
    std::size_t N0 = 0, N1 = 0;
    double kappa_A = 0.0;  // infinite when A is indefinite
    double lambda_min_A = 0.0;
    std::vector<PrecondResult> results;
};

inline PrecondResult run_pcg(const Instance& inst, const std::string& name, const ExperimentConfig& c) {
    PrecondResult r;
    r.name = name;
    try {
        BlockPreconditioner p(PreconditionerSpec::from_name(name), inst.system.A, inst.split, &inst.mesh);
        const auto [u, rep] = pcg(inst.system.A, inst.system.b, p.as_function(), c.tol, c.maxit);
        r.iterations = rep.iterations;
        r.converged = rep.converged;
        r.kappa = rep.kappa_estimate;
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    return r;
}

inline PrecondRow precond_row(const ExperimentConfig& c, int level, const Vec3& x0, double delta, double beta) {
    NitscheParams p = c.params();
    p.beta = beta;
    const Instance inst = make_instance(c, level, x0, p);
    PrecondRow row;
    row.level = level;
    row.delta = delta;
    row.beta = beta;
    row.N0 = inst.split.N0();
    row.N1 = inst.split.N1();
    const SpectrumEstimate est = estimate_condition(inst.system.A);
    row.lambda_min_A = est.lambda_min;
    row.kappa_A = est.lambda_min > 0.0 ? est.kappa : std::numeric_limits<double>::infinity();
    for (const auto& name : c.preconditioners) row.results.push_back(run_pcg(inst, name, c));
    return row;
}

inline std::vector<PrecondRow> run_precond_sweep(const ExperimentConfig& c) {
    return parallel_map(c.levels.size(), c.jobs,
                        [&](std::size_t i) { return precond_row(c, c.levels[i], c.x0, 0.0, c.beta); });
}

inline std::vector<PrecondRow> run_cut_sweep(const ExperimentConfig& c) {
    return parallel_map(c.deltas.size(), c.jobs, [&](std::size_t i) {
        const double d = c.deltas[i];
        return precond_row(c, c.sweep_level, ExperimentConfig::shifted_center(d), d, c.beta);
    });
}

/// The cut sweep with and without ghost penalty.
inline std::vector<PrecondRow> run_ablation_beta0(const ExperimentConfig& c) {
    ExperimentConfig a = c;
    a.preconditioners = {"pa", "pd", "pb"};
    return parallel_map(2 * c.deltas.size(), c.jobs, [&](std::size_t i) {
        const double d = c.deltas[i / 2];
        return precond_row(a, c.sweep_level, ExperimentConfig::shifted_center(d), d, i % 2 == 0 ? c.beta : 0.0);
    });
}

// ---------------------------------------------------------------------------
// CSV output

namespace detail {

inline std::string sci(double v) {
    if (std::isinf(v)) return "inf";
    if (!std::isfinite(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6e", v);
    return buf;
}

inline std::string fixed(double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace detail

inline void write_dims_csv(std::ostream& os, const std::vector<DimsRow>& rows) {
    os << "level,N0,N1,assumption_holds\n";
    for (const auto& r : rows) os << r.level << ',' << r.N0 << ',' << r.N1 << ',' << (r.assumption ? 1 : 0) << '\n';
}

inline void write_convergence_csv(std::ostream& os, const std::vector<ConvergenceRow>& rows) {
    os << "level,N,l2_error,l2_order,h1_error,h1_order,h1_full_error,l2_error_active,h1_error_active,solved\n";
    for (const auto& r : rows) {
        os << r.level << ',' << r.N << ',' << detail::sci(r.errors.l2) << ','
           << (r.l2_order ? detail::fixed(*r.l2_order, 2) : "") << ',' << detail::sci(r.errors.h1_semi) << ','
           << (r.h1_order ? detail::fixed(*r.h1_order, 2) : "") << ',' << detail::sci(r.errors.h1) << ','
           << detail::sci(r.errors.l2_omega_h) << ',' << detail::sci(r.errors.h1_semi_omega_h) << ','
           << (r.solved ? 1 : 0) << '\n';
    }
}

/// Columns: key columns, kappa_A, then it_<name> and kappa_<name> per preconditioner, then failures.
inline void write_precond_csv(std::ostream& os, const std::vector<PrecondRow>& rows, bool with_delta, bool with_beta) {
    if (rows.empty()) return;
    os << (with_delta ? "delta," : "") << (with_beta ? "beta," : "") << "level,N0,N1,kappa_A";
    for (const auto& r : rows.front().results) os << ",it_" << r.name;
    for (const auto& r : rows.front().results) os << ",kappa_" << r.name;
    os << ",failures\n";
    for (const auto& row : rows) {
        if (with_delta) os << detail::fixed(row.delta, 4) << ',';
        if (with_beta) os << row.beta << ',';
        os << row.level << ',' << row.N0 << ',' << row.N1 << ',' << detail::sci(row.kappa_A);
        std::string failures = row.lambda_min_A > 0.0 ? "" : "A indefinite";
        for (const auto& r : row.results) {
            os << ',' << r.iterations;
            if (!r.error.empty()) failures += (failures.empty() ? "" : ";") + r.name + ": " + r.error;
            else if (!r.converged) failures += (failures.empty() ? "" : ";") + r.name + ": no convergence";
        }
        for (const auto& r : row.results) os << ',' << (r.error.empty() ? detail::sci(r.kappa) : "nan");
        for (char& ch : failures)
            if (ch == ',' || ch == '\n') ch = ' ';
        os << ',' << failures << '\n';
    }
}

inline void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    body(os);
}

// ---------------------------------------------------------------------------
// Verification report

using json = nlohmann::json;

struct VerifyEntry {
    int level = 0;
    double delta = 0.0;
    bool shifted = false;  // x0 = (delta, 2 delta, 3 delta) rather than the configured center
    json data;
    std::vector<std::string> failures;
};

inline json interval_json(const RatioInterval& r) { return json::array({r.min, r.max}); }

inline VerifyEntry verify_instance(const ExperimentConfig& c, int level, const Vec3& x0, double delta, bool shifted,
                                   std::uint64_t seed) {
    VerifyEntry e;
    e.level = level;
    e.delta = delta;
    e.shifted = shifted;
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(level),
                      std::uint32_t(std::llround(delta * 1e6)), std::uint32_t(shifted)};
    std::mt19937_64 rng(seq);

    const Instance inst = make_instance(c, level, x0);
    const NitscheParams p = c.params();
    json& d = e.data;
    d["level"] = level;
    d["delta"] = delta;
    d["x0"] = {x0[0], x0[1], x0[2]};
    d["gamma"] = p.gamma;
    d["beta"] = p.beta;
    d["N0"] = inst.split.N0();
    d["N1"] = inst.split.N1();

    try {
        SparseCholesky check(inst.system.A);
        d["spd"] = true;
    } catch (const Error&) {
        d["spd"] = false;
        e.failures.push_back("system matrix is not SPD");
    }

    const auto strip = measure_norm_equivalence_strip(inst.mesh, inst.split, p, c.samples, rng);
    d["strip_equivalence"] = {{"interior", interval_json(strip.interior)}, {"boundary", interval_json(strip.boundary)}};
    if (!strip.interior.valid() || !strip.boundary.valid()) e.failures.push_back("strip norm ratio not finite");
    d["estfund_max"] = check_estfund(inst.mesh, inst.split, p, c.samples, rng);

    const auto cs = check_strengthened_cs(inst.mesh, inst.split, 50, rng);
    d["strengthened_cs"] = {
        {"max_ratio", cs.max_ratio}, {"bound", cs.bound}, {"elements", cs.elements}, {"skipped", cs.skipped}};
    if (cs.max_ratio > cs.bound + 1e-10) e.failures.push_back("strengthened Cauchy-Schwarz bound exceeded");

    const auto ka = estimate_splitting_constant(inst.system.A, inst.split, 30, rng);
    d["K_a"] = {{"estimate", ka.K_a}, {"sampled_max", ka.sampled_max}, {"method", ka.dense ? "dense" : "lanczos"}};
    if (ka.K_a < 1.0 - 1e-8) e.failures.push_back("splitting constant below 1");

    const SparseMatrix B = assemble_b_form(inst.mesh, inst.split, p);
    d["form_ratio"] = interval_json(sample_form_ratio(inst.system.A, B, c.samples, rng));

    const BlockPartition part = extract_blocks(inst.system.A, inst.split);
    const BlockPreconditioner pa(PreconditionerSpec::pa(), inst.system.A, inst.split);
    const Jacobi jac(part.A1);
    const SymmetricGaussSeidel sgs(part.A1);
    json k;
    k["A"] = estimate_condition(inst.system.A).kappa;
    k["PA_A"] = estimate_condition(inst.system.A, pa.as_function()).kappa;
    k["jacobi_A1"] = estimate_condition(part.A1, [&](const Vector& r, Vector& z) { jac.apply(r, z); }).kappa;
    k["sgs_A1"] = estimate_condition(part.A1, [&](const Vector& r, Vector& z) { sgs.apply(r, z); }).kappa;
    if (part.n0 > 0) {
        const MGHierarchy mg = build_mg_hierarchy(inst.mesh, inst.split, part.A0);
        k["vcycle_A0"] = estimate_condition(part.A0, [&](const Vector& r, Vector& z) { mg.apply(r, z); }).kappa;
        k["mg_levels"] = mg.num_levels();
    }
    d["kappa"] = k;
    d["failures"] = e.failures;
    return e;
}

/// Default verification set: each configured level at x0, and the cut sweep.
inline json run_verify(const ExperimentConfig& c) {
    struct Job {
        int level;
        Vec3 x0;
        double delta;
        bool shifted;
    };
    std::vector<Job> jobs;
    for (int l : c.levels) jobs.push_back({l, c.x0, 0.0, false});
    for (double d : c.deltas) jobs.push_back({c.sweep_level, ExperimentConfig::shifted_center(d), d, true});

    const auto entries = parallel_map(jobs.size(), c.jobs, [&](std::size_t i) {
        return verify_instance(c, jobs[i].level, jobs[i].x0, jobs[i].delta, jobs[i].shifted, c.seed);
    });

    json report;
    report["seed"] = c.seed;
    report["gamma"] = c.gamma;
    report["beta"] = c.beta;
    report["samples"] = c.samples;
    report["length_scale"] = c.length_scale == LengthScale::GridSpacing ? "spacing" : "diameter";

    std::seed_seq seq{std::uint32_t(c.seed), std::uint32_t(c.seed >> 32), 7u};
    std::mt19937_64 rng(seq);
    const auto lemma = check_matrix_lemma(20, 100, rng);
    report["matrix_lemma"] = {{"dimension", 20}, {"trials", lemma.trials}, {"holds", lemma.holds},
                              {"max_ratio", lemma.max_ratio}};

    std::vector<std::string> failures;
    if (!lemma.holds) failures.push_back("matrix lemma violated");
    report["levels"] = json::array();
    report["cut_sweep"] = json::array();
    for (const auto& e : entries) {
        (e.shifted ? report["cut_sweep"] : report["levels"]).push_back(e.data);
        for (const auto& f : e.failures)
            failures.push_back("level " + std::to_string(e.level) + (e.shifted ? " delta " + detail::fixed(e.delta, 3) : "") +
                               ": " + f);
    }

    // Largest factor between entries of each measured constant.
    auto spread = [](const json& list, const std::function<double(const json&)>& get) {
        std::vector<double> v;
        for (const auto& e : list) v.push_back(get(e));
        return variation(v);
    };
    auto uniformity = [&](const json& list) {
        json u;
        u["K_a"] = spread(list, [](const json& e) { return e["K_a"]["estimate"].get<double>(); });
        u["kappa_PA_A"] = spread(list, [](const json& e) { return e["kappa"]["PA_A"].get<double>(); });
        u["kappa_jacobi_A1"] = spread(list, [](const json& e) { return e["kappa"]["jacobi_A1"].get<double>(); });
        u["kappa_sgs_A1"] = spread(list, [](const json& e) { return e["kappa"]["sgs_A1"].get<double>(); });
        u["kappa_vcycle_A0"] = spread(list, [](const json& e) { return e["kappa"].value("vcycle_A0", 1.0); });
        u["estfund_max"] = spread(list, [](const json& e) { return e["estfund_max"].get<double>(); });
        u["form_ratio_min"] = spread(list, [](const json& e) { return e["form_ratio"][0].get<double>(); });
        u["form_ratio_max"] = spread(list, [](const json& e) { return e["form_ratio"][1].get<double>(); });
        return u;
    };
    report["uniformity"] = {{"levels", uniformity(report["levels"])}, {"cut_sweep", uniformity(report["cut_sweep"])}};
    report["failures"] = failures;
    report["passed"] = failures.empty();
    return report;
}

}  // namespace cutfem
