#include "cutfem/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace cutfem;

namespace {

struct Flags {
    std::string config;
    int level = -1;
    std::string levels;
    double gamma = 0, beta = 0, tol = 0;
    std::string delta;
    std::string precond;
    std::uint64_t seed = 0;
    std::string out;
    bool deep = false;
    int jobs = 0;
    std::string length_scale;
    int samples = 0;
};

struct Command {
    CLI::App* app = nullptr;
    Flags flags;
    CLI::Option* o_level = nullptr;
    CLI::Option* o_levels = nullptr;
    CLI::Option* o_gamma = nullptr;
    CLI::Option* o_beta = nullptr;
    CLI::Option* o_tol = nullptr;
    CLI::Option* o_delta = nullptr;
    CLI::Option* o_precond = nullptr;
    CLI::Option* o_seed = nullptr;
    CLI::Option* o_out = nullptr;
    CLI::Option* o_jobs = nullptr;
    CLI::Option* o_length = nullptr;
    CLI::Option* o_samples = nullptr;
};

void add_flags(Command& c) {
    auto* a = c.app;
    Flags& f = c.flags;
    a->add_option("--config", f.config, "key = value configuration file (flags override it)")->check(CLI::ExistingFile);
    c.o_level = a->add_option("--level", f.level, "single refinement level");
    c.o_levels = a->add_option("--levels", f.levels, "levels as a range 0..4 or a list 0,1,2");
    c.o_gamma = a->add_option("--gamma", f.gamma, "Nitsche penalty");
    c.o_beta = a->add_option("--beta", f.beta, "ghost penalty");
    c.o_delta = a->add_option("--delta", f.delta, "center shift(s) delta, x0 = (d, 2d, 3d); comma list");
    c.o_tol = a->add_option("--tol", f.tol, "PCG reduction of the preconditioned residual");
    c.o_precond = a->add_option("--precond", f.precond, "comma list from sgs, pa, pd, pb, pj");
    c.o_seed = a->add_option("--seed", f.seed, "random seed");
    c.o_out = a->add_option("--out", f.out, "output directory (or file for exports)");
    a->add_flag("--deep", f.deep, "include the large levels 5 and 6");
    c.o_jobs = a->add_option("--jobs", f.jobs, "independent runs in parallel")->check(CLI::PositiveNumber);
    c.o_length = a->add_option("--length-scale", f.length_scale, "penalty length: spacing or diameter")
                     ->check(CLI::IsMember({"spacing", "diameter"}));
    c.o_samples = a->add_option("--samples", f.samples, "random samples per measured ratio")->check(CLI::PositiveNumber);
}

// Command defaults, then the config file, then explicit flags.
ExperimentConfig resolve(const Command& c, std::vector<int> default_levels, std::vector<int> deep_levels) {
    ExperimentConfig cfg;
    const Flags& f = c.flags;
    cfg.levels = f.deep ? deep_levels : default_levels;
    if (!f.config.empty()) load_config(cfg, f.config);
    if (f.deep) cfg.deep = true;
    if (*c.o_levels) cfg.levels = parse_levels(f.levels);
    if (*c.o_level) {
        if (f.level < 0) throw Error("--level must be non-negative");
        cfg.levels = {f.level};
        cfg.sweep_level = f.level;
    }
    if (*c.o_gamma) cfg.gamma = f.gamma;
    if (*c.o_beta) cfg.beta = f.beta;
    if (*c.o_tol) cfg.tol = f.tol;
    if (*c.o_delta) cfg.deltas = parse_doubles("delta", f.delta);
    if (*c.o_precond) cfg.preconditioners = detail::split_list(f.precond);
    if (*c.o_seed) cfg.seed = f.seed;
    if (*c.o_out) cfg.out = f.out;
    if (*c.o_jobs) cfg.jobs = f.jobs;
    if (*c.o_samples) cfg.samples = f.samples;
    if (*c.o_length) apply_setting(cfg, "length_scale", f.length_scale);
    if (!cfg.deep)
        for (int l : cfg.levels)
            if (l > 4) throw Error("levels above 4 require --deep");
    for (const auto& p : cfg.preconditioners) PreconditionerSpec::from_name(p);
    cfg.params().validate();
    return cfg;
}

// A single --delta shifts the center for commands that run one geometry.
Vec3 center(const Command& c, const ExperimentConfig& cfg) {
    if (!*c.o_delta) return cfg.x0;
    if (cfg.deltas.size() != 1) throw Error("this command takes a single --delta");
    return ExperimentConfig::shifted_center(cfg.deltas.front());
}

void emit(const ExperimentConfig& cfg, const std::string& name, const std::function<void(std::ostream&)>& body) {
    const fs::path path = fs::path(cfg.out) / name;
    write_file(path, body);
    body(std::cout);
    std::cerr << "wrote " << path.string() << '\n';
}

std::vector<int> range(int lo, int hi) {
    std::vector<int> v;
    for (int l = lo; l <= hi; ++l) v.push_back(l);
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fictitious-domain Nitsche Poisson solver with subspace-splitting preconditioners"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> names{
        {"dims", "interior and boundary dof counts per level (table1.csv)"},
        {"convergence", "manufactured-solution errors and orders (table2.csv)"},
        {"precond", "condition numbers and PCG iterations per level (table3.csv)"},
        {"cutsweep", "the same for shifted centers at one level (table4.csv)"},
        {"ablation", "cut sweep with and without ghost penalty (ablation.csv)"},
        {"verify", "measured stability constants (verify.json)"},
        {"export-mm", "write A and b in Matrix Market format"},
        {"export-vtk", "write the active mesh as legacy VTK"},
    };
    std::map<std::string, Command> cmds;
    for (const auto& [name, help] : names) {
        Command c;
        c.app = app.add_subcommand(name, help);
        cmds[name] = c;
        add_flags(cmds[name]);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmds["dims"].app) {
            const auto& c = cmds["dims"];
            ExperimentConfig cfg = resolve(c, range(0, 4), range(0, 6));
            cfg.x0 = center(c, cfg);
            const auto rows = run_dims(cfg);
            emit(cfg, "table1.csv", [&](std::ostream& os) { write_dims_csv(os, rows); });
        } else if (*cmds["convergence"].app) {
            const auto& c = cmds["convergence"];
            ExperimentConfig cfg = resolve(c, range(0, 4), range(0, 5));
            cfg.x0 = center(c, cfg);
            const auto rows = run_convergence(cfg);
            emit(cfg, "table2.csv", [&](std::ostream& os) { write_convergence_csv(os, rows); });
        } else if (*cmds["precond"].app) {
            const auto& c = cmds["precond"];
            ExperimentConfig cfg = resolve(c, range(0, 4), range(0, 5));
            cfg.x0 = center(c, cfg);
            const auto rows = run_precond_sweep(cfg);
            emit(cfg, "table3.csv", [&](std::ostream& os) { write_precond_csv(os, rows, false, false); });
        } else if (*cmds["cutsweep"].app) {
            const ExperimentConfig cfg = resolve(cmds["cutsweep"], {3}, {3});
            const auto rows = run_cut_sweep(cfg);
            emit(cfg, "table4.csv", [&](std::ostream& os) { write_precond_csv(os, rows, true, false); });
        } else if (*cmds["ablation"].app) {
            const ExperimentConfig cfg = resolve(cmds["ablation"], {3}, {3});
            const auto rows = run_ablation_beta0(cfg);
            emit(cfg, "ablation.csv", [&](std::ostream& os) { write_precond_csv(os, rows, true, true); });
        } else if (*cmds["verify"].app) {
            const ExperimentConfig cfg = resolve(cmds["verify"], range(2, 4), range(2, 4));
            const json report = run_verify(cfg);
            emit(cfg, "verify.json", [&](std::ostream& os) { os << report.dump(2) << '\n'; });
            if (!report["passed"].get<bool>()) {
                for (const auto& f : report["failures"]) std::cerr << "failed: " << f.get<std::string>() << '\n';
                return 1;
            }
        } else if (*cmds["export-mm"].app) {
            const auto& c = cmds["export-mm"];
            ExperimentConfig cfg = resolve(c, {3}, {3});
            if (cfg.levels.size() != 1) throw Error("export-mm takes a single level");
            const Instance inst = make_instance(cfg, cfg.levels.front(), center(c, cfg));
            const fs::path dir(cfg.out);
            const std::string stem = "level" + std::to_string(inst.level);
            write_file(dir / (stem + "_A.mtx"), [&](std::ostream& os) { write_matrix_market(os, inst.system.A); });
            write_file(dir / (stem + "_b.mtx"), [&](std::ostream& os) { write_matrix_market(os, inst.system.b); });
            std::cout << "N0 " << inst.split.N0() << " N1 " << inst.split.N1() << " nnz " << inst.system.A.nnz()
                      << "\nwrote " << (dir / (stem + "_A.mtx")).string() << " and " << (dir / (stem + "_b.mtx")).string()
                      << '\n';
        } else if (*cmds["export-vtk"].app) {
            const auto& c = cmds["export-vtk"];
            ExperimentConfig cfg = resolve(c, {3}, {3});
            if (cfg.levels.size() != 1) throw Error("export-vtk takes a single level");
            const int level = cfg.levels.front();
            const ActiveMesh mesh = build_active_mesh(cfg.lattice(level), LevelSet(center(c, cfg), cfg.radius));
            const SubspaceSplit split = classify_dofs(mesh);
            const fs::path path = fs::path(cfg.out) / ("level" + std::to_string(level) + ".vtk");
            write_file(path, [&](std::ostream& os) { write_vtk(os, mesh, split); });
            std::cout << "cells " << mesh.num_cells() << " cut " << mesh.num_cut_cells() << "\nwrote " << path.string()
                      << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
