#pragma once

// Continuous 2D point-mass mazes over an ASCII wall grid.
//
// Cell (cx, cy) covers [cx, cx+1) x [cy, cy+1) scaled by cell_size; row 0 is
// the first line of the layout text. Actions are displacements clipped per
// component to one cell per step; a motion segment that would enter a wall
// cell stops just short of the wall face.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cplan/core.hpp"

namespace cplan {

struct Cell {
    int x = 0;
    int y = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
};

struct MazeSpec {
    int width = 0;
    int height = 0;
    std::vector<bool> walls;  // row-major, true = blocked
    std::vector<Cell> start_region;
    std::vector<Cell> goal_region;
    double cell_size = 1.0;

    bool in_bounds(int cx, int cy) const { return cx >= 0 && cy >= 0 && cx < width && cy < height; }
    bool is_wall(int cx, int cy) const { return !in_bounds(cx, cy) || walls[cy * width + cx]; }
    bool is_free(Cell c) const { return !is_wall(c.x, c.y); }

    Cell cell_of(Vec2 p) const {
        return {static_cast<int>(std::floor(p.x / cell_size)), static_cast<int>(std::floor(p.y / cell_size))};
    }
    Vec2 cell_center(Cell c) const { return {(c.x + 0.5) * cell_size, (c.y + 0.5) * cell_size}; }
    bool contains_free(Vec2 p) const { return is_free(cell_of(p)); }

    std::vector<Cell> free_cells() const {
        std::vector<Cell> out;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                if (!is_wall(x, y)) out.push_back({x, y});
        return out;
    }

    // Extent of the maze in length units (used to normalize network inputs).
    Vec2 extent() const { return {width * cell_size, height * cell_size}; }
};

struct EnvState {
    Vec2 position;
    friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct Goal {
    Vec2 position;
    friend bool operator==(const Goal&, const Goal&) = default;
};

struct StepResult {
    EnvState next_state;
    bool collided = false;
};

inline constexpr double kMaxAction = 1.0;        // cells per step, per component
inline constexpr double kWallMargin = 1e-6;

inline MazeSpec parse_maze(std::string_view text) {
    std::vector<std::string> rows;
    std::string line;
    std::istringstream in{std::string(text)};
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        rows.push_back(line);
    }
    while (!rows.empty() && rows.back().empty()) rows.pop_back();
    if (rows.empty()) throw ParseError("empty maze");

    MazeSpec spec;
    spec.height = static_cast<int>(rows.size());
    spec.width = static_cast<int>(rows.front().size());
    if (spec.width == 0) throw ParseError("empty maze row");
    spec.walls.assign(static_cast<std::size_t>(spec.width * spec.height), true);

    std::vector<Cell> free;
    for (int y = 0; y < spec.height; ++y) {
        const auto& row = rows[static_cast<std::size_t>(y)];
        if (static_cast<int>(row.size()) != spec.width)
            throw ParseError("ragged maze: row " + std::to_string(y) + " has width " +
                             std::to_string(row.size()) + ", expected " + std::to_string(spec.width));
        for (int x = 0; x < spec.width; ++x) {
            const char ch = row[static_cast<std::size_t>(x)];
            switch (ch) {
                case '#': break;
                case '.':
                case 'S':
                case 'G':
                    spec.walls[static_cast<std::size_t>(y * spec.width + x)] = false;
                    free.push_back({x, y});
                    if (ch == 'S') spec.start_region.push_back({x, y});
                    if (ch == 'G') spec.goal_region.push_back({x, y});
                    break;
                default:
                    throw ParseError(std::string("unknown character '") + ch + "' at row " + std::to_string(y) +
                                     ", column " + std::to_string(x));
            }
        }
    }
    if (free.empty()) throw ParseError("maze has no free cell");
    for (int x = 0; x < spec.width; ++x)
        if (!spec.is_wall(x, 0) || !spec.is_wall(x, spec.height - 1)) throw ParseError("maze border must be walls");
    for (int y = 0; y < spec.height; ++y)
        if (!spec.is_wall(0, y) || !spec.is_wall(spec.width - 1, y)) throw ParseError("maze border must be walls");

    if (spec.start_region.empty()) spec.start_region = free;
    if (spec.goal_region.empty()) spec.goal_region = free;
    return spec;
}

inline MazeSpec load_maze_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot open maze file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_maze(ss.str());
}

namespace layouts {

inline constexpr std::string_view kFourRooms =
    "###########\n"
    "#SSSS#....#\n"
    "#SSSS#....#\n"
    "#SSSS.....#\n"
    "#SSSS#....#\n"
    "##.####.###\n"
    "#....#....#\n"
    "#....#....#\n"
    "#.........#\n"
    "#....#GGGG#\n"
    "###########\n";

inline constexpr std::string_view kMaze5x5 =
    "#######\n"
    "#S..#G#\n"
    "###.#.#\n"
    "#...#.#\n"
    "#.###.#\n"
    "#.....#\n"
    "#######\n";

inline constexpr std::string_view kMaze11x11 =
    "#############\n"
    "#S....#.....#\n"
    "#####.#.###.#\n"
    "#.....#...#.#\n"
    "#.#######.#.#\n"
    "#.#.....#.#.#\n"
    "#.#.###.#.#.#\n"
    "#.#.#G#.#...#\n"
    "#.#.#.#.###.#\n"
    "#...#.#.....#\n"
    "#.###.#####.#\n"
    "#.....#.....#\n"
    "#############\n";

}  // namespace layouts

// Built-in layouts by name: "FourRooms", "Maze-5x5", "Maze-11x11".
inline std::optional<MazeSpec> builtin_maze(std::string_view name) {
    if (name == "FourRooms") return parse_maze(layouts::kFourRooms);
    if (name == "Maze-5x5") return parse_maze(layouts::kMaze5x5);
    if (name == "Maze-11x11") return parse_maze(layouts::kMaze11x11);
    return std::nullopt;
}

// Default episode length for a layout: 100 steps for 11x11-interior mazes, 50 otherwise.
inline int default_episode_length(const MazeSpec& spec) {
    return (spec.width - 2 >= 11 && spec.height - 2 >= 11) ? 100 : 50;
}

inline Vec2 sample_in_cell(const MazeSpec& spec, Cell c, Rng& rng) {
    const double u = uniform01(rng);
    const double v = uniform01(rng);
    return {(c.x + u) * spec.cell_size, (c.y + v) * spec.cell_size};
}

inline std::pair<EnvState, Goal> reset(const MazeSpec& spec, Rng& rng) {
    const Cell sc = spec.start_region[uniform_index(rng, spec.start_region.size())];
    const Vec2 s = sample_in_cell(spec, sc, rng);
    const Cell gc = spec.goal_region[uniform_index(rng, spec.goal_region.size())];
    const Vec2 g = sample_in_cell(spec, gc, rng);
    return {EnvState{s}, Goal{g}};
}

inline Vec2 clip_action(Vec2 a, double a_max) {
    return {std::clamp(a.x, -a_max, a_max), std::clamp(a.y, -a_max, a_max)};
}

inline StepResult step(const MazeSpec& spec, const EnvState& state, Vec2 action) {
    const double cs = spec.cell_size;
    const Vec2 d = clip_action(action, kMaxAction * cs);
    const Vec2 p = state.position;
    const double len = d.norm();
    if (len == 0.0) return {state, false};

    // Grid traversal along p + t*d, t in [0, 1].
    Cell c = spec.cell_of(p);
    const int sx = d.x > 0 ? 1 : (d.x < 0 ? -1 : 0);
    const int sy = d.y > 0 ? 1 : (d.y < 0 ? -1 : 0);
    const double inf = std::numeric_limits<double>::infinity();
    auto next_boundary = [&](double pos, int cell, int s, double delta) {
        if (s == 0) return inf;
        const double edge = (s > 0 ? (cell + 1) : cell) * cs;
        return (edge - pos) / delta;
    };
    double tx = next_boundary(p.x, c.x, sx, d.x);
    double ty = next_boundary(p.y, c.y, sy, d.y);
    const double dtx = sx == 0 ? inf : cs / std::abs(d.x);
    const double dty = sy == 0 ? inf : cs / std::abs(d.y);

    auto stop_at = [&](double t_hit) {
        const double t = std::max(0.0, t_hit - kWallMargin / len);
        Vec2 q = p + t * d;
        if (!spec.contains_free(q)) q = p;
        return StepResult{EnvState{q}, true};
    };

    while (true) {
        const double t_next = std::min(tx, ty);
        if (t_next > 1.0) break;
        if (tx < ty) {
            if (spec.is_wall(c.x + sx, c.y)) return stop_at(tx);
            c.x += sx;
            tx += dtx;
        } else if (ty < tx) {
            if (spec.is_wall(c.x, c.y + sy)) return stop_at(ty);
            c.y += sy;
            ty += dty;
        } else {
            // Exact corner crossing: blocked if any of the three touched cells is a wall.
            if (spec.is_wall(c.x + sx, c.y) || spec.is_wall(c.x, c.y + sy) || spec.is_wall(c.x + sx, c.y + sy))
                return stop_at(tx);
            c.x += sx;
            c.y += sy;
            tx += dtx;
            ty += dty;
        }
    }
    const Vec2 q = p + d;
    if (!spec.contains_free(q)) {
        // Rounding put the endpoint across a face the traversal treated as unreached.
        return stop_at(std::min(1.0, std::min(tx, ty)));
    }
    return {EnvState{q}, false};
}

inline double goal_distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

}  // namespace cplan
