#pragma once

// Waypoint heatmaps and SVG figures. Everything here is plain computation on
// scores or CSV rows; nothing reads training state directly.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cplan/core.hpp"
#include "cplan/env.hpp"
#include "cplan/oracle.hpp"
#include "cplan/planner.hpp"

namespace cplan {

struct Heatmap {
    int width = 0;
    int height = 0;
    Eigen::MatrixXd mass;  // (y, x); zero on walls
    Vec2 start;
    Vec2 goal;

    double total() const { return mass.sum(); }
};

// Normalized waypoint probabilities softmax(d) over a grid of candidate points
// (resolution^2 per free cell), summed per cell.
template <typename Scorer>
Heatmap waypoint_heatmap(const MazeSpec& spec, Vec2 s0, Vec2 sg, Scorer&& scorer, int resolution = 1,
                         double temperature = 1.0) {
    if (resolution < 1) throw UsageError("heatmap resolution must be >= 1");
    if (!spec.contains_free(s0) || !spec.contains_free(sg)) throw UsageError("heatmap endpoints must lie in free cells");
    std::vector<Vec2> cands;
    std::vector<Cell> owner;
    for (const Cell c : spec.free_cells())
        for (int i = 0; i < resolution; ++i)
            for (int j = 0; j < resolution; ++j) {
                cands.push_back({(c.x + (i + 0.5) / resolution) * spec.cell_size, (c.y + (j + 0.5) / resolution) * spec.cell_size});
                owner.push_back(c);
            }
    const Eigen::VectorXd d = score_candidates(s0, sg, std::span<const Vec2>(cands), scorer);
    const Eigen::VectorXd p = softmax_weights(d, temperature);
    Heatmap h;
    h.width = spec.width;
    h.height = spec.height;
    h.mass = Eigen::MatrixXd::Zero(spec.height, spec.width);
    h.start = s0;
    h.goal = sg;
    for (std::size_t k = 0; k < cands.size(); ++k) h.mass(owner[k].y, owner[k].x) += p(static_cast<Eigen::Index>(k));
    return h;
}

// Shortest-path step counts between free cells under 4-connected moves, read off
// the optimal goal-reaching values V(s) = gamma^d(s, g) from value iteration.
inline std::vector<int> cell_distances(const MazeSpec& spec, Cell goal, double gamma = 0.9) {
    const auto disc = oracle::discretize(spec);
    const int g = disc.state_of(goal);
    if (g < 0) throw UsageError("distance target is not a free cell");
    Eigen::VectorXd V;
    oracle::optimal_policy(disc.mdp, g, gamma, &V);
    std::vector<int> out(static_cast<std::size_t>(spec.width * spec.height), -1);
    for (int s = 0; s < disc.mdp.n; ++s) {
        const Cell c = disc.cells[static_cast<std::size_t>(s)];
        if (V(s) > 0) out[static_cast<std::size_t>(c.y * spec.width + c.x)] = static_cast<int>(std::lround(std::log(V(s)) / std::log(gamma)));
    }
    return out;
}

// Cells lying on at least one shortest path from a to b.
inline std::vector<bool> shortest_path_cells(const MazeSpec& spec, Cell a, Cell b) {
    const auto da = cell_distances(spec, a);
    const auto db = cell_distances(spec, b);
    const int total = da[static_cast<std::size_t>(b.y * spec.width + b.x)];
    if (total < 0) throw UnreachableGoalError("no path between heatmap endpoints");
    std::vector<bool> on(da.size(), false);
    for (std::size_t k = 0; k < da.size(); ++k) on[k] = da[k] >= 0 && db[k] >= 0 && da[k] + db[k] == total;
    return on;
}

// Fraction of heatmap mass on cells within Chebyshev distance `radius` of a marked cell.
inline double mass_near(const Heatmap& h, const std::vector<bool>& marked, int radius = 1) {
    double near = 0.0;
    for (int y = 0; y < h.height; ++y)
        for (int x = 0; x < h.width; ++x) {
            bool hit = false;
            for (int dy = -radius; dy <= radius && !hit; ++dy)
                for (int dx = -radius; dx <= radius && !hit; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (xx >= 0 && yy >= 0 && xx < h.width && yy < h.height) hit = marked[static_cast<std::size_t>(yy * h.width + xx)];
                }
            if (hit) near += h.mass(y, x);
        }
    return near / h.total();
}

// max / min of cell mass over free cells.
inline double max_min_ratio(const Heatmap& h, const MazeSpec& spec) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const Cell c : spec.free_cells()) {
        lo = std::min(lo, h.mass(c.y, c.x));
        hi = std::max(hi, h.mass(c.y, c.x));
    }
    return lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
}

inline void write_heatmap_csv(const Heatmap& h, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "x,y,mass\n";
    char buf[64];
    for (int y = 0; y < h.height; ++y)
        for (int x = 0; x < h.width; ++x) {
            std::snprintf(buf, sizeof buf, "%.10g", h.mass(y, x));
            f << x << "," << y << "," << buf << "\n";
        }
}

namespace svg {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

// White-to-red ramp.
inline std::string heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int g = static_cast<int>(std::lround(255 * (1.0 - t)));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#ff%02x%02x", g, g);
    return buf;
}

inline const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

}  // namespace svg

inline std::string heatmap_svg(const Heatmap& h, const MazeSpec& spec, const std::string& title) {
    const double px = 32.0;
    const double top = 28.0;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << svg::num(h.width * px) << "\" height=\""
      << svg::num(h.height * px + top) << "\">\n";
    o << "<text x=\"4\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" << svg::escape(title) << "</text>\n";
    const double peak = h.mass.maxCoeff() > 0 ? h.mass.maxCoeff() : 1.0;
    for (int y = 0; y < h.height; ++y)
        for (int x = 0; x < h.width; ++x) {
            const bool wall = spec.is_wall(x, y);
            o << "<rect class=\"" << (wall ? "wall" : "cell") << "\" x=\"" << svg::num(x * px) << "\" y=\""
              << svg::num(top + y * px) << "\" width=\"" << svg::num(px) << "\" height=\"" << svg::num(px)
              << "\" fill=\"" << (wall ? std::string("#333333") : svg::heat_color(h.mass(y, x) / peak))
              << "\" stroke=\"#cccccc\"";
            if (!wall) o << " data-mass=\"" << h.mass(y, x) << "\"";
            o << "/>\n";
        }
    auto marker = [&](Vec2 p, const char* color, const char* cls) {
        o << "<circle class=\"" << cls << "\" cx=\"" << svg::num(p.x / spec.cell_size * px) << "\" cy=\""
          << svg::num(top + p.y / spec.cell_size * px) << "\" r=\"6\" fill=\"" << color << "\"/>\n";
    };
    marker(h.start, "#1f77b4", "start");
    marker(h.goal, "#2ca02c", "goal");
    o << "</svg>\n";
    return o.str();
}

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> band;  // optional +- band (same length as y)
};

struct Panel {
    std::string title;
    std::string x_label;
    std::vector<Series> series;
};

// Vertically stacked line-plot panels.
inline std::string curves_svg(const std::vector<Panel>& panels) {
    const double W = 640, H = 220, ml = 60, mr = 150, mt = 28, mb = 36;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << svg::num(W) << "\" height=\""
      << svg::num(H * static_cast<double>(panels.size())) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (std::size_t pi = 0; pi < panels.size(); ++pi) {
        const Panel& p = panels[pi];
        const double oy = H * static_cast<double>(pi);
        double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
        for (const auto& s : p.series)
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                const double b = s.band.empty() ? 0.0 : s.band[i];
                x0 = std::min(x0, s.x[i]);
                x1 = std::max(x1, s.x[i]);
                y0 = std::min(y0, s.y[i] - b);
                y1 = std::max(y1, s.y[i] + b);
            }
        if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
        if (x1 <= x0) x1 = x0 + 1;
        if (y1 <= y0) y1 = y0 + 1;
        const double pw = W - ml - mr, ph = H - mt - mb;
        auto sx = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
        auto sy = [&](double y) { return oy + mt + ph - (y - y0) / (y1 - y0) * ph; };
        o << "<g class=\"panel\">\n";
        o << "<text x=\"" << svg::num(ml) << "\" y=\"" << svg::num(oy + 18) << "\" font-size=\"13\">" << svg::escape(p.title)
          << "</text>\n";
        o << "<rect x=\"" << svg::num(ml) << "\" y=\"" << svg::num(oy + mt) << "\" width=\"" << svg::num(pw)
          << "\" height=\"" << svg::num(ph) << "\" fill=\"none\" stroke=\"#888\"/>\n";
        o << "<text x=\"" << svg::num(ml - 4) << "\" y=\"" << svg::num(oy + mt + 10) << "\" text-anchor=\"end\">"
          << svg::num(y1) << "</text>\n";
        o << "<text x=\"" << svg::num(ml - 4) << "\" y=\"" << svg::num(oy + mt + ph) << "\" text-anchor=\"end\">"
          << svg::num(y0) << "</text>\n";
        o << "<text x=\"" << svg::num(ml) << "\" y=\"" << svg::num(oy + mt + ph + 14) << "\">" << svg::num(x0) << "</text>\n";
        o << "<text x=\"" << svg::num(ml + pw) << "\" y=\"" << svg::num(oy + mt + ph + 14) << "\" text-anchor=\"end\">"
          << svg::num(x1) << "</text>\n";
        o << "<text x=\"" << svg::num(ml + pw / 2) << "\" y=\"" << svg::num(oy + mt + ph + 28) << "\" text-anchor=\"middle\">"
          << svg::escape(p.x_label) << "</text>\n";
        for (std::size_t si = 0; si < p.series.size(); ++si) {
            const Series& s = p.series[si];
            const char* color = svg::kPalette[si % std::size(svg::kPalette)];
            if (!s.band.empty() && !s.x.empty()) {
                o << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.15\" points=\"";
                for (std::size_t i = 0; i < s.x.size(); ++i) o << svg::num(sx(s.x[i])) << "," << svg::num(sy(s.y[i] + s.band[i])) << " ";
                for (std::size_t i = s.x.size(); i-- > 0;) o << svg::num(sx(s.x[i])) << "," << svg::num(sy(s.y[i] - s.band[i])) << " ";
                o << "\"/>\n";
            }
            o << "<polyline class=\"series\" data-name=\"" << svg::escape(s.name) << "\" fill=\"none\" stroke=\"" << color
              << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i) o << svg::num(sx(s.x[i])) << "," << svg::num(sy(s.y[i])) << " ";
            o << "\"/>\n";
            o << "<text x=\"" << svg::num(ml + pw + 8) << "\" y=\"" << svg::num(oy + mt + 12 + 14 * static_cast<double>(si))
              << "\" fill=\"" << color << "\">" << svg::escape(s.name) << "</text>\n";
        }
        o << "</g>\n";
    }
    o << "</svg>\n";
    return o.str();
}

// Minimal CSV reader for the files this project writes (no quoting).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw ParseError("CSV has no column '" + name + "'");
    }
    std::vector<double> numbers(const std::string& name) const {
        const int c = column(name);
        std::vector<double> out;
        for (const auto& r : rows) {
            if (static_cast<std::size_t>(c) >= r.size()) throw ParseError("short CSV row");
            char* end = nullptr;
            const double v = std::strtod(r[static_cast<std::size_t>(c)].c_str(), &end);
            if (end == r[static_cast<std::size_t>(c)].c_str()) throw ParseError("non-numeric CSV cell: " + r[static_cast<std::size_t>(c)]);
            out.push_back(v);
        }
        return out;
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot read " + path);
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(tok);
        return out;
    };
    CsvTable t;
    std::string line;
    if (!std::getline(f, line)) throw ParseError("empty CSV: " + path);
    t.header = split(line);
    while (std::getline(f, line))
        if (!line.empty()) t.rows.push_back(split(line));
    return t;
}

// Median min-distance per eval step from eval.csv rows.
inline std::pair<std::vector<double>, std::vector<double>> median_curve(const CsvTable& eval) {
    const auto steps = eval.numbers("step");
    const auto dist = eval.numbers("min_distance");
    std::map<double, std::vector<double>> by_step;
    for (std::size_t i = 0; i < steps.size(); ++i) by_step[steps[i]].push_back(dist[i]);
    std::vector<double> xs, ys;
    for (auto& [s, v] : by_step) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        xs.push_back(s);
        ys.push_back(n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
    }
    return {xs, ys};
}

}  // namespace cplan
