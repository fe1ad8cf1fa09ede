// Experiment driver for the bifurcating-families laboratory: wires the model,
// the 1D circle family, the contractive-field checks, the induction engine
// and the tangency tracker to flat-file artifacts.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "tangencylab/circle.hpp"
#include "tangencylab/cocycle.hpp"
#include "tangencylab/config.hpp"
#include "tangencylab/contractive.hpp"
#include "tangencylab/induction.hpp"
#include "tangencylab/manifold.hpp"
#include "tangencylab/model.hpp"
#include "tangencylab/report.hpp"
#include "tangencylab/tangency.hpp"
#include "tangencylab/verify_model.hpp"

namespace fs = std::filesystem;
using namespace tlab;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumeric = 4;

int thread_cap() {
    const char* env = std::getenv("TANGENCYLAB_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n > 0 ? n : 1;
}

// deterministic parallel map: results land in preallocated slots
template <typename Fn>
void parallel_indices(std::size_t n, Fn&& fn) {
    const int nt = std::min<int>(thread_cap(), static_cast<int>(n));
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = static_cast<std::size_t>(t); i < n; i += nt) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

std::string default_config_text() {
    return
        "[model]\n"
        "sigma1 = 2.0\n"
        "sigma2 = 1.3\n"
        "lambda1 = 4e-4\n"
        "b = 4e-4\n"
        "N = 3\n"
        "K = 1.0\n"
        "A1_factor = 0.25\n"
        "B1_factor = 5.1\n"
        "C1_factor = 4.9\n"
        "A2 = 3.6e-4\n"
        "B2 = 3.6e-4\n"
        "C2 = 3.6e-4\n"
        "sigma0 = 1.2\n"
        "tau = 0.1\n"
        "q_y = 0.5\n"
        "\n"
        "[induction]\n"
        "c = 0.15\n"
        "c_tilde = 1.1\n"
        "c_hat = 0.13\n"
        "alpha = 0.015\n"
        "beta = 0.075\n"
        "h = 4.0\n"
        "rho = 0\n"
        "varrho = 0.05\n"
        "K1 = 0\n"
        "C_fold = 1.0\n"
        "k_max = 30\n"
        "slope_frac = 0.1\n"
        "\n"
        "[circle]\n"
        "degree = 2\n"
        "A = 2.5\n"
        "B = 0\n"
        "delta1 = 3e-3\n"
        "eta1 = 4e-9\n"
        "omega = 0.3819660112501051\n"
        "gamma = 0.005\n"
        "abar = 0.1180339887498949\n"
        "zeta_J = 0.1\n"
        "c = 0.3\n"
        "c_tilde = 0.6\n"
        "c_hat = 0.28\n"
        "alpha = 0.08\n"
        "\n"
        "[tangency]\n"
        "m = 6\n"
        "k_max = 30\n"
        "\n"
        "[run]\n"
        "seed = 2024\n"
        "out = out\n";
}

struct Ctx {
    Config cfg;
    model::ModelParams mp;
    induction::InductionConstants ic;
    circle1d::CircleParams cp;
    fs::path out;
    std::uint64_t seed = 2024;
    io::RunManifest manifest;
};

Ctx make_ctx(const std::string& config_path, const std::string& out_dir,
             const std::string& command) {
    Ctx ctx;
    ctx.cfg = config_path.empty() ? Config::parse_string(default_config_text())
                                  : Config::parse_file(config_path);
    ctx.mp = model::model_params_from_config(ctx.cfg);
    ctx.ic = induction::induction_constants_from_config(ctx.cfg);
    ctx.cp = circle1d::circle_params_from_config(ctx.cfg);
    ctx.seed = static_cast<std::uint64_t>(ctx.cfg.get_int("run", "seed", 2024));
    ctx.out = out_dir.empty() ? fs::path(ctx.cfg.get_string("run", "out", "out"))
                              : fs::path(out_dir);
    fs::create_directories(ctx.out);
    ctx.manifest.command = command;
    ctx.manifest.seed = ctx.seed;
    ctx.manifest.config = io::config_snapshot(ctx.cfg);
    return ctx;
}

void validate_or_die(const Ctx& ctx) {
    const auto rep = model::validate_constants(ctx.mp);
    if (!rep.pass) {
        std::cerr << "constants validation failed:\n" << io::to_json(rep).dump(2) << "\n";
        std::exit(kExitValidation);
    }
    const auto icchk = induction::check_induction_constants(ctx.ic, ctx.mp.b);
    if (!icchk.ok) {
        std::cerr << "induction constants invalid: " << icchk.note << "\n";
        std::exit(kExitValidation);
    }
}

// -------------------------------------------------------------------------
// circle

int cmd_circle(Ctx& ctx, double theta_min, double theta_max, int theta_steps, int n_max) {
    std::vector<double> thetas;
    for (int i = 0; i < theta_steps; ++i) {
        thetas.push_back(theta_steps == 1
                             ? theta_min
                             : theta_min + (theta_max - theta_min) * i / (theta_steps - 1));
    }

    std::vector<circle1d::ExclusionRun> runs(thetas.size());
    parallel_indices(thetas.size(), [&](std::size_t i) {
        const int horizon =
            n_max > 0 ? n_max : 2 * circle1d::stabilization_time(ctx.cp, thetas[i]);
        runs[i] = circle1d::run_exclusion_1d(ctx.cp, thetas[i], horizon);
    });

    io::CsvWriter legs("v1");
    legs.header({"theta", "interval_lo", "interval_hi"});
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        for (const auto& iv : runs[i].omega.back().parts())
            legs.row(thetas[i], iv.lo, iv.hi);
    }
    legs.save(ctx.out / "legs.csv");
    ctx.manifest.add_artifact("legs.csv");

    // legs picture: excluded regions per theta row
    {
        const double a0 = ctx.cp.abar - ctx.cp.eta1, a1 = ctx.cp.abar + ctx.cp.eta1;
        io::SvgPlot svg(a0, a1, theta_min, theta_max);
        for (std::size_t i = 0; i < thetas.size(); ++i) {
            IntervalSet excluded = IntervalSet::single(a0, a1);
            for (const auto& iv : runs[i].omega.back().parts()) excluded.subtract(iv);
            for (const auto& iv : excluded.parts())
                svg.segment(iv.lo, thetas[i], iv.hi, thetas[i], "crimson", 3.0);
            for (const auto& iv : runs[i].omega.back().parts())
                svg.segment(iv.lo, thetas[i], iv.hi, thetas[i], "steelblue", 1.0);
        }
        svg.save(ctx.out / "legs.svg");
        ctx.manifest.add_artifact("legs.svg");
    }

    // derivative chain at retained midpoints of the top row
    nlohmann::json chains = nlohmann::json::array();
    const auto& top = runs.back();
    for (const auto& iv : top.omega.back().parts()) {
        const double a = 0.5 * (iv.lo + iv.hi);
        const auto chain = circle1d::verify_derivative_chain(ctx.cp, a, thetas.back(), 200);
        auto j = io::to_json(chain);
        j["a"] = a;
        j["theta"] = thetas.back();
        chains.push_back(j);
    }
    nlohmann::json doc = {{"theta_grid", thetas}, {"chains", chains}};
    io::atomic_write(ctx.out / "chain_report.json", doc.dump(2) + "\n");
    ctx.manifest.add_artifact("chain_report.json");
    std::cout << "circle: " << thetas.size() << " theta rows\n";
    return 0;
}

// -------------------------------------------------------------------------
// model-verify

int cmd_model_verify(Ctx& ctx, int n_samples) {
    validate_or_die(ctx);
    model::DeskModel m = model::build_desk_model(ctx.mp, 0.0, 0.0);
    const auto cone = model::verify_cone_expansion(m, n_samples, ctx.seed);
    const auto fd = model::verify_deriv_consistency(m);
    const auto dis = model::verify_dissipativity(m);
    const auto olap = model::verify_chart_overlaps(m);
    nlohmann::json doc = {{"validation", io::to_json(model::validate_constants(ctx.mp))},
                          {"cone_expansion", io::to_json(cone)},
                          {"deriv_consistency",
                           {{"worst_rel_error", fd.worst_rel_error},
                            {"samples", fd.samples},
                            {"pass", fd.pass}}},
                          {"dissipativity",
                           {{"fitted_C", dis.fitted_C},
                            {"samples", dis.samples},
                            {"pass", dis.pass}}},
                          {"chart_overlaps",
                           {{"worst_error", olap.worst_error}, {"pass", olap.pass}}}};
    io::atomic_write(ctx.out / "model_verify.json", doc.dump(2) + "\n");
    ctx.manifest.add_artifact("model_verify.json");
    std::cout << doc.dump(2) << "\n";
    return (cone.pass && fd.pass && dis.pass && olap.pass) ? 0 : kExitNumeric;
}

// -------------------------------------------------------------------------
// fields-verify

int cmd_fields_verify(Ctx& ctx, int n_segments) {
    validate_or_die(ctx);
    model::DeskFamily fam(ctx.mp);
    Rng rng(ctx.seed);
    int passed = 0, run = 0, tried = 0;
    nlohmann::json all = nlohmann::json::array();
    // the lemma is conditional: candidates are drawn until n_segments satisfy
    // its expanding/shadowing hypotheses
    while (run < n_segments && tried < 50 * n_segments) {
        ++tried;
        const double x = rng.uniform(0.05, 0.9);
        model::PhasePoint zhat{model::Chart::P, x, rng.uniform(-0.5, 0.5)};
        model::PhasePoint xi = zhat;
        xi.y += rng.uniform(-0.05, 0.05);
        const int n = 8 + static_cast<int>(rng.next_below(13));
        const auto rep =
            fields::verify_cd_lemma(fam, 0.0, -0.5 * fam.params().eta(), zhat, xi, n);
        if (!rep.precondition_ok) continue;
        ++run;
        if (rep.pass) ++passed;
        all.push_back(io::to_json(rep));
    }
    nlohmann::json doc = {{"segments_run", run}, {"segments_passed", passed}, {"reports", all}};
    io::atomic_write(ctx.out / "fields_verify.json", doc.dump(2) + "\n");
    ctx.manifest.add_artifact("fields_verify.json");
    std::cout << "fields-verify: " << passed << "/" << run << " segments passed\n";
    return (run >= n_segments && passed == run) ? 0 : kExitNumeric;
}

// -------------------------------------------------------------------------
// manifold

int cmd_manifold(Ctx& ctx, int generations) {
    validate_or_die(ctx);
    model::DeskModel m = model::build_desk_model(ctx.mp, 0.0, 0.0);
    auto g0 = manifold::seed_generation_zero(m);
    auto tail = manifold::fundamental_tail(m, g0);

    io::CsvWriter csv("v1");
    csv.header({"chart", "x", "y", "generation"});
    for (const auto& s : g0.samples) csv.row(model::chart_name(s.chart), s.x, s.y, 0);

    std::vector<manifold::GenerationArc> arcs{tail};
    nlohmann::json census = nlohmann::json::array();
    for (int g = 1; g <= generations; ++g) {
        try {
            auto next = manifold::grow_generation(m, arcs.back());
            for (const auto& s : next.samples) csv.row(model::chart_name(s.chart), s.x, s.y, g);
            const auto cc = manifold::critical_census(m, next, ctx.mp.N, ctx.mp.b);
            nlohmann::json row = {{"generation", g},
                                  {"flat_subarcs", cc.flat_subarcs},
                                  {"minimizers", nlohmann::json::array()}};
            for (const auto& c : cc.minimizers)
                row["minimizers"].push_back(
                    {{"x", c.point.x}, {"y", c.point.y}, {"angle", c.angle}});
            census.push_back(row);
            arcs.push_back(std::move(next));
        } catch (const std::exception& e) {
            std::cerr << "generation " << g << " stopped: " << e.what() << "\n";
            break;
        }
    }
    csv.save(ctx.out / "manifold.csv");
    ctx.manifest.add_artifact("manifold.csv");
    io::atomic_write(ctx.out / "critical_census.json",
                     nlohmann::json({{"order", ctx.mp.N}, {"per_generation", census}}).dump(2) +
                         "\n");
    ctx.manifest.add_artifact("critical_census.json");

    io::SvgPlot svg(-1.0, 8.0, -1.2, 1.2);
    std::vector<std::pair<double, double>> g0pts;
    for (const auto& s : g0.samples) {
        const Vec2 gp = m.to_global(s);
        g0pts.push_back({gp.x, gp.y});
    }
    svg.polyline(g0pts, "black", 1.5);
    for (std::size_t i = 1; i < arcs.size(); ++i) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& s : arcs[i].samples) {
            const Vec2 gp = m.to_global(s);
            pts.push_back({gp.x, gp.y});
        }
        svg.polyline(pts, i % 2 ? "steelblue" : "seagreen", 1.0);
    }
    const Vec2 qh = m.to_global(m.qhat());
    svg.dot(qh.x, qh.y, "crimson", 4.0);
    svg.text(qh.x, qh.y + 0.1, "critical");
    svg.save(ctx.out / "manifold.svg");
    ctx.manifest.add_artifact("manifold.svg");
    std::cout << "manifold: " << arcs.size() - 1 << " generations grown\n";
    return 0;
}

// -------------------------------------------------------------------------
// induction

int cmd_induction(Ctx& ctx, int k_max) {
    validate_or_die(ctx);
    model::DeskFamily fam(ctx.mp);
    const model::DeskModel m = fam.at(0.0, -0.25 * ctx.mp.eta());
    const auto arc = tangency::central_arc(m);
    const auto crit = manifold::find_critical_approx(m, arc, ctx.mp.N);
    std::vector<induction::BindingPoint> crits{{crit.point, arc.tangent(crit.arc_x)}};

    const auto cond = induction::check_conditions(m, crit.point, k_max, crits, ctx.ic);

    io::CsvWriter csv("v1");
    csv.header({"time", "chart", "x", "y", "depth", "bound_period", "folding_period", "free",
                "slope_gap"});
    for (const auto& r : cond.returns) {
        csv.row(r.time, model::chart_name(r.point.chart), r.point.x, r.point.y, r.depth,
                r.bound_period, r.folding_period, r.free_return ? 1 : 0, r.slope_gap);
    }
    csv.save(ctx.out / "returns.csv");
    ctx.manifest.add_artifact("returns.csv");

    nlohmann::json doc = {{"k_max", k_max},
                          {"BA_margin", std::isfinite(cond.BA_margin) ? cond.BA_margin : 1e300},
                          {"FA_value", cond.FA_value},
                          {"FA_margin", cond.FA_margin},
                          {"EG_margin", cond.EG_margin},
                          {"fold_free_slope_C", cond.fold_free_slope_C},
                          {"returns", cond.returns.size()}};
    io::atomic_write(ctx.out / "induction.json", doc.dump(2) + "\n");
    ctx.manifest.add_artifact("induction.json");
    std::cout << doc.dump(2) << "\n";
    return 0;
}

// -------------------------------------------------------------------------
// tangency

int cmd_tangency(Ctx& ctx, int m_level, int k_max) {
    validate_or_die(ctx);
    model::DeskFamily fam(ctx.mp);
    auto run = tangency::run_to_limit(fam, m_level, k_max, ctx.ic);

    io::CsvWriter curves("v1");
    curves.header({"a", "theta", "level_j", "m"});
    for (std::size_t i = 0; i < run.curve.as.size(); ++i)
        curves.row(run.curve.as[i], run.curve.thetas[i], run.curve.level_j, m_level);
    curves.save(ctx.out / "curves.csv");
    ctx.manifest.add_artifact("curves.csv");

    io::CsvWriter retained("v1");
    retained.header({"a_lo", "a_hi"});
    for (const auto& arc : run.partition.arcs) retained.row(arc.lo, arc.hi);
    retained.save(ctx.out / "retained.csv");
    ctx.manifest.add_artifact("retained.csv");

    io::CsvWriter steps("v1");
    steps.header({"k", "level_j", "retained_length", "worst_level_error", "min_angle",
                  "arc_count"});
    for (const auto& s : run.steps)
        steps.row(s.k, s.level_j, s.retained_length, s.worst_level_error, s.min_angle,
                  s.arc_count);
    steps.save(ctx.out / "tangency_steps.csv");
    ctx.manifest.add_artifact("tangency_steps.csv");

    {
        const double eta = ctx.mp.eta();
        io::SvgPlot svg(-eta, eta, -1.0, 0.1);
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < run.curve.as.size(); ++i)
            pts.push_back({run.curve.as[i], run.curve.thetas[i]});
        svg.polyline(pts, "black", 1.0);
        for (const auto& arc : run.partition.arcs)
            svg.segment(arc.lo, run.curve.eval(arc.mid()), arc.hi, run.curve.eval(arc.mid()),
                        "seagreen", 3.0);
        svg.save(ctx.out / "tangency_curves.svg");
        ctx.manifest.add_artifact("tangency_curves.svg");
    }

    // diagnostics at a retained tangency candidate
    nlohmann::json diag;
    if (!run.partition.arcs.empty()) {
        const double a_star = run.partition.arcs.front().mid();
        const double th_star = model::find_theta_star(ctx.mp, a_star);
        const model::DeskModel mm = fam.at(a_star, th_star);
        diag = io::to_json(tangency::diagnostics(mm, 400, 6, 1000, ctx.seed));
        diag["a"] = a_star;
        diag["theta_star_raw"] = th_star;
    }
    nlohmann::json doc = {{"m", m_level},
                          {"k_max", k_max},
                          {"completed", run.completed},
                          {"note", run.note},
                          {"final_retained_length",
                           run.steps.empty() ? 0.0 : run.steps.back().retained_length},
                          {"diagnostics", diag}};
    io::atomic_write(ctx.out / "diagnostics.json", doc.dump(2) + "\n");
    ctx.manifest.add_artifact("diagnostics.json");
    std::cout << "tangency: completed=" << run.completed << " retained arcs="
              << run.partition.arcs.size() << "\n";
    return run.completed ? 0 : kExitNumeric;
}

// -------------------------------------------------------------------------
// figures

int cmd_figures(Ctx& ctx) {
    validate_or_die(ctx);
    // cubic fold: image of a horizontal segment under the fold map at three
    // thetas around the tangency value
    const double eta = ctx.mp.eta();
    const double th_star = model::find_theta_star(ctx.mp, 0.0);
    const double thetas[3] = {th_star - 0.5 * eta, th_star, th_star + 0.5 * eta};
    const char* colors[3] = {"steelblue", "black", "crimson"};
    const double d = ctx.mp.delta();

    // the image arc spans B1 d^3 horizontally but only b*d vertically
    const double arm = 0.6 * d;
    const double u_span = 1.2 * ctx.mp.b1() * arm * arm * arm;
    const double v_span = 1.2 * ctx.mp.b * arm;
    io::SvgPlot svg(-u_span, u_span, ctx.mp.q_y - v_span, ctx.mp.q_y + v_span);
    model::DeskFamily fam(ctx.mp);
    for (int t = 0; t < 3; ++t) {
        const model::DeskModel m = fam.at(0.0, thetas[t]);
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i <= 600; ++i) {
            const double x = -arm + 2.0 * arm * i / 600.0;
            const auto img = m.eval({model::Chart::Fold, x, 0.0});
            if (img) pts.push_back({img->x, img->y});
        }
        svg.polyline(pts, colors[t], 1.2);
    }
    svg.segment(0.0, ctx.mp.q_y - v_span, 0.0, ctx.mp.q_y + v_span, "gray", 0.5);
    svg.save(ctx.out / "cubic_fold.svg");
    ctx.manifest.add_artifact("cubic_fold.svg");
    std::cout << "figures written\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tangencylab: a desk-scale laboratory for cubic heteroclinic bifurcations"};
    app.require_subcommand(1);
    app.fallthrough();  // --config/--out may follow the subcommand

    std::string config_path, out_dir;
    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--out", out_dir, "output directory (overrides [run] out)");

    auto* c_print = app.add_subcommand("print-config", "dump the effective configuration");

    auto* c_circle = app.add_subcommand("circle", "1D exclusion run and legs diagram");
    double theta_min = -1.0, theta_max = -0.05;
    int theta_steps = 16, n_max = 0;
    c_circle->add_option("--theta-min", theta_min);
    c_circle->add_option("--theta-max", theta_max);
    c_circle->add_option("--theta-steps", theta_steps);
    c_circle->add_option("--n-max", n_max,
                         "exclusion horizon (0: twice the per-theta stabilization time)");

    auto* c_model = app.add_subcommand("model-verify", "cone/expansion and consistency checks");
    int n_samples = 10000;
    c_model->add_option("--samples", n_samples);

    auto* c_fields = app.add_subcommand("fields-verify", "contractive-field checks");
    int n_segments = 100;
    c_fields->add_option("--segments", n_segments);

    auto* c_mani = app.add_subcommand("manifold", "grow W^u and dump arcs");
    int generations = 6;
    c_mani->add_option("--generations", generations);

    auto* c_ind = app.add_subcommand("induction", "orbitwise condition scan");
    int ind_k = 30;
    c_ind->add_option("--k-max", ind_k);

    auto* c_tan = app.add_subcommand("tangency", "level-curve tracking run");
    int tan_m = 0, tan_k = 0;
    c_tan->add_option("--m", tan_m);
    c_tan->add_option("--k-max", tan_k);

    auto* c_fig = app.add_subcommand("figures", "emit the standalone figures");
    auto* c_full = app.add_subcommand("full", "run every stage");

    CLI11_PARSE(app, argc, argv);

    try {
        Ctx ctx = make_ctx(config_path, out_dir, app.get_subcommands().front()->get_name());

        int rc = 0;
        if (c_print->parsed()) {
            std::cout << default_config_text();
            return 0;
        }
        if (c_circle->parsed() || c_full->parsed())
            rc = std::max(rc, cmd_circle(ctx, theta_min, theta_max, theta_steps, n_max));
        if (c_model->parsed() || c_full->parsed())
            rc = std::max(rc, cmd_model_verify(ctx, n_samples));
        if (c_fields->parsed() || c_full->parsed())
            rc = std::max(rc, cmd_fields_verify(ctx, n_segments));
        if (c_mani->parsed() || c_full->parsed()) rc = std::max(rc, cmd_manifold(ctx, generations));
        if (c_ind->parsed() || c_full->parsed()) rc = std::max(rc, cmd_induction(ctx, ind_k));
        if (c_tan->parsed() || c_full->parsed()) {
            const int mm = tan_m > 0 ? tan_m
                                     : static_cast<int>(ctx.cfg.get_int("tangency", "m",
                                                                        ctx.mp.N + 3));
            const int kk = tan_k > 0 ? tan_k
                                     : static_cast<int>(ctx.cfg.get_int("tangency", "k_max", 30));
            rc = std::max(rc, cmd_tangency(ctx, mm, kk));
        }
        if (c_fig->parsed() || c_full->parsed()) rc = std::max(rc, cmd_figures(ctx));

        ctx.manifest.save(ctx.out / "manifest.json");
        return rc;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const model::ConstructionError& e) {
        std::cerr << "validation failure: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return kExitNumeric;
    }
}
