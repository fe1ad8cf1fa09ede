#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tangencylab/circle.hpp"
#include "tangencylab/contractive.hpp"
#include "tangencylab/core.hpp"
#include "tangencylab/model.hpp"
#include "tangencylab/tangency.hpp"
#include "tangencylab/verify_model.hpp"

// Flat-file persistence: JSON reports, versioned CSV artifacts, small SVG
// plots, and the run manifest. All writes are temp-then-rename so interrupted
// runs leave no partial artifacts behind.

namespace tlab::io {

using nlohmann::json;

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
        out << content;
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// CSV

class CsvWriter {
  public:
    explicit CsvWriter(std::string schema_version = "v1") : schema_(std::move(schema_version)) {
        os_ << std::setprecision(17);
        os_ << "# schema=" << schema_ << "\n";
    }

    void header(const std::vector<std::string>& cols) {
        for (std::size_t i = 0; i < cols.size(); ++i)
            os_ << cols[i] << (i + 1 < cols.size() ? "," : "\n");
    }

    template <typename... Ts>
    void row(const Ts&... vals) {
        row_impl(vals...);
        os_ << "\n";
    }

    std::string str() const { return os_.str(); }
    void save(const std::filesystem::path& path) const { atomic_write(path, os_.str()); }

  private:
    template <typename T>
    void row_impl(const T& v) {
        os_ << v;
    }
    template <typename T, typename... Rest>
    void row_impl(const T& v, const Rest&... rest) {
        os_ << v << ",";
        row_impl(rest...);
    }

    std::string schema_;
    std::ostringstream os_;
};

// ---------------------------------------------------------------------------
// SVG (minimal polyline plots)

class SvgPlot {
  public:
    SvgPlot(double x0, double x1, double y0, double y1, int width = 800, int height = 600)
        : x0_(x0), x1_(x1), y0_(y0), y1_(y1), w_(width), h_(height) {
        os_ << std::setprecision(8);
        os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\""
            << h_ << "\" viewBox=\"0 0 " << w_ << " " << h_ << "\">\n";
        os_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                  double stroke = 1.0) {
        if (pts.size() < 2) return;
        os_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << stroke
            << "\" points=\"";
        for (const auto& [x, y] : pts) os_ << px(x) << "," << py(y) << " ";
        os_ << "\"/>\n";
    }

    void segment(double xa, double ya, double xb, double yb, const std::string& color,
                 double stroke = 1.0) {
        os_ << "<line x1=\"" << px(xa) << "\" y1=\"" << py(ya) << "\" x2=\"" << px(xb)
            << "\" y2=\"" << py(yb) << "\" stroke=\"" << color << "\" stroke-width=\"" << stroke
            << "\"/>\n";
    }

    void dot(double x, double y, const std::string& color, double r = 3.0) {
        os_ << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"" << r << "\" fill=\""
            << color << "\"/>\n";
    }

    void text(double x, double y, const std::string& label) {
        os_ << "<text x=\"" << px(x) << "\" y=\"" << py(y) << "\" font-size=\"12\">" << label
            << "</text>\n";
    }

    std::string str() const { return os_.str() + "</svg>\n"; }
    void save(const std::filesystem::path& path) const { atomic_write(path, str()); }

  private:
    double px(double x) const { return (x - x0_) / (x1_ - x0_) * (w_ - 40) + 20; }
    double py(double y) const { return h_ - 20 - (y - y0_) / (y1_ - y0_) * (h_ - 40); }

    double x0_, x1_, y0_, y1_;
    int w_, h_;
    std::ostringstream os_;
};

// ---------------------------------------------------------------------------
// JSON serializers for the report types

inline json to_json(const model::ValidationReport& r) {
    json checks = json::array();
    for (const auto& c : r.checks) {
        checks.push_back({{"invariant", c.invariant},
                          {"lhs", c.lhs},
                          {"rhs", c.rhs},
                          {"margin", c.margin},
                          {"pass", c.pass}});
    }
    return {{"pass", r.pass}, {"checks", checks}};
}

inline json to_json(const model::ConeReport& r) {
    return {{"samples_outside", r.samples_outside},
            {"violations_outside", r.violations_outside},
            {"worst_norm_outside", r.worst_norm_outside},
            {"worst_slope_outside", r.worst_slope_outside},
            {"samples_boundary", r.samples_boundary},
            {"violations_boundary", r.violations_boundary},
            {"worst_norm_boundary", r.worst_norm_boundary},
            {"worst_slope_boundary", r.worst_slope_boundary},
            {"pass", r.pass}};
}

inline json to_json(const fields::CdLemmaReport& r) {
    json items = json::array();
    for (const auto& it : r.items) {
        // item 1 fits the small constant c, the others fit the large C
        const bool small_c = it.name.find("c/sqrt(b)") != std::string::npos;
        items.push_back({{"item", it.name},
                         {small_c ? "fitted_c" : "fitted_C", it.fitted},
                         {"worst_margin", it.worst_margin},
                         {"n_samples", it.samples},
                         {"pass", it.pass}});
    }
    return {{"precondition_ok", r.precondition_ok},
            {"note", r.note},
            {"items", items},
            {"pass", r.pass}};
}

inline json to_json(const circle1d::ChainReport& r) {
    return {{"ok", r.ok},
            {"first_return_after_stabilization", r.first_return_after_stabilization},
            {"min_margin_overall", r.min_margin_overall},
            {"min_margin_pre_return",
             std::isfinite(r.min_margin_pre_return) ? r.min_margin_pre_return : 0.0},
            {"min_margin_escape",
             std::isfinite(r.min_margin_escape) ? r.min_margin_escape : 0.0},
            {"span", r.span}};
}

inline json to_json(const tangency::DiagnosticsReport& r) {
    json pts = json::array();
    for (const auto& pp : r.periodic_points) {
        pts.push_back({{"chart", model::chart_name(pp.point.chart)},
                       {"x", pp.point.x},
                       {"y", pp.point.y},
                       {"period", pp.period},
                       {"eig_max", pp.eig_max},
                       {"eig_min", pp.eig_min},
                       {"lyap", pp.lyap},
                       {"hyperbolic", pp.hyperbolic}});
    }
    return {{"periodic_points", pts},
            {"all_periodic_hyperbolic", r.all_periodic_hyperbolic},
            {"min_periodic_lyap", r.min_periodic_lyap},
            {"lyap_P", r.lyap_P},
            {"lyap_Q", r.lyap_Q},
            {"lyap_samples", r.lyap_samples},
            {"lyap_positive", r.lyap_positive},
            {"lyap_min_sampled", r.lyap_min_sampled},
            {"tangency_recurrence", r.tangency_recurrence}};
}

// ---------------------------------------------------------------------------
// run manifest

struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    json config;
    std::vector<std::string> artifacts;
    json timings = json::object();

    void add_artifact(const std::string& name) { artifacts.push_back(name); }

    json to_json_obj() const {
        return {{"command", command},
                {"seed", seed},
                {"config", config},
                {"artifacts", artifacts},
                {"timings", timings}};
    }

    void save(const std::filesystem::path& path) const {
        atomic_write(path, to_json_obj().dump(2) + "\n");
    }
};

inline json config_snapshot(const Config& cfg) {
    json out = json::object();
    for (const auto& [k, v] : cfg.raw()) out[k] = v;
    return out;
}

}  // namespace tlab::io
