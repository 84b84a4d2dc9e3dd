#pragma once

#include "wayfinder/grid.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wayfinder {

enum class Cell : std::uint8_t { Wall = 0, Floor = 1 };

/// What an observer knows about a cell.
enum class Seen : std::uint8_t { Unknown = 0, Wall = 1, Floor = 2, Goal = 3 };

/// The fully observed world: walls, floors, start, goal.
///
/// Construction validates every invariant, so a GridMap in hand is always
/// well-formed: start and goal are in-bounds Floor cells, the goal is
/// reachable from the start under 4-connectivity and the map has at least
/// nine cells.
class GridMap {
 public:
  static GridMap create(Grid<Cell> cells, Position start, Position goal, std::string id = {},
                        std::string pair_id = {});

  const std::string& id() const { return id_; }
  const std::string& pair_id() const { return pair_id_; }
  int width() const { return static_cast<int>(cells_.cols()); }
  int height() const { return static_cast<int>(cells_.rows()); }
  Position start() const { return start_; }
  Position goal() const { return goal_; }
  const Grid<Cell>& cells() const { return cells_; }

  bool contains(Position p) const { return in_bounds(cells_, p); }
  bool is_floor(Position p) const { return contains(p) && cells_(p.row, p.col) == Cell::Floor; }

  friend bool operator==(const GridMap& a, const GridMap& b) {
    return a.id_ == b.id_ && a.pair_id_ == b.pair_id_ && a.start_ == b.start_ &&
           a.goal_ == b.goal_ && a.cells_.rows() == b.cells_.rows() &&
           a.cells_.cols() == b.cells_.cols() && (a.cells_ == b.cells_).all();
  }

 private:
  GridMap() = default;

  std::string id_;
  std::string pair_id_;
  Grid<Cell> cells_;
  Position start_;
  Position goal_;
};

/// Local view of radius r around `center`; window(r, r) is the center.
struct Observation {
  Position center;
  int radius = 1;
  Grid<Seen> window;
  int steps_taken = 0;

  Seen at(Position map_pos) const;
};

struct MapMetrics {
  int shortest_path = 0;
  double brittleness = 0.0;
  double openness = 0.0;
  int reachable_cells = 1;

  double isolated_fraction() const { return 1.0 - brittleness - openness; }
};

/// Parses the ASCII map format: optional `@key value` header lines (`id`,
/// `pair_id`) followed by rows over {#, ., S, G}. Throws MalformedMap or
/// UnreachableGoal.
GridMap parse_map(std::string_view text);

/// Canonical text form; parse_map(serialize_map(m)) == m for every map with
/// start != goal.
std::string serialize_map(const GridMap& map);

GridMap load_map_file(const std::string& path);

/// Loads every `*.map` file in a directory, sorted by map id.
std::vector<GridMap> load_map_dir(const std::string& dir);

/// Deterministic transition. Blocked or out-of-bounds moves return `pos`.
Position step(const GridMap& map, Position pos, Action action);

Observation observe(const GridMap& map, Position pos, int radius, int steps_taken = 0);

/// BFS distance under 4-connectivity; nullopt when unreachable.
std::optional<int> shortest_path_length(const GridMap& map, Position from, Position to);

/// BFS distances from `source` to every cell; -1 marks unreachable or wall.
Grid<int> distance_field(const GridMap& map, Position source);

/// A shortest action sequence start -> goal. Each cell steps to the neighbour
/// that first discovered it in a BFS rooted at the goal that expands
/// neighbours in canonical action order.
std::vector<Action> shortest_path_actions(const GridMap& map, Position from, Position to);

MapMetrics graph_metrics(const GridMap& map);

}  // namespace wayfinder
