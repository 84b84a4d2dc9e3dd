#include "wayfinder/gridworld.hpp"

#include "wayfinder/errors.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace wayfinder {

std::string_view to_token(Action a) {
  switch (a) {
    case Action::Up: return "UP";
    case Action::Down: return "DOWN";
    case Action::Left: return "LEFT";
    case Action::Right: return "RIGHT";
  }
  return "?";
}

std::optional<Action> parse_action(std::string_view token) {
  while (!token.empty() && std::isspace(static_cast<unsigned char>(token.front()))) {
    token.remove_prefix(1);
  }
  while (!token.empty() && std::isspace(static_cast<unsigned char>(token.back()))) {
    token.remove_suffix(1);
  }
  std::string upper(token);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (Action a : kActions) {
    if (upper == to_token(a)) return a;
  }
  return std::nullopt;
}

namespace {

Grid<int> bfs(const Grid<Cell>& cells, Position source) {
  Grid<int> dist = Grid<int>::Constant(cells.rows(), cells.cols(), -1);
  if (!in_bounds(cells, source) || cells(source.row, source.col) != Cell::Floor) return dist;
  std::deque<Position> queue{source};
  dist(source.row, source.col) = 0;
  while (!queue.empty()) {
    const Position p = queue.front();
    queue.pop_front();
    for (Action a : kActions) {
      const Position q = offset(p, a);
      if (!in_bounds(cells, q) || cells(q.row, q.col) != Cell::Floor) continue;
      if (dist(q.row, q.col) >= 0) continue;
      dist(q.row, q.col) = dist(p.row, p.col) + 1;
      queue.push_back(q);
    }
  }
  return dist;
}

std::string trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return std::string(line);
}

}  // namespace

GridMap GridMap::create(Grid<Cell> cells, Position start, Position goal, std::string id,
                        std::string pair_id) {
  if (cells.rows() == 0 || cells.cols() == 0) throw MalformedMap("map has no cells");
  if (cells.rows() * cells.cols() < 9) throw MalformedMap("map must have at least 9 cells");
  if (!in_bounds(cells, start) || cells(start.row, start.col) != Cell::Floor) {
    throw MalformedMap("start is not an in-bounds floor cell");
  }
  if (!in_bounds(cells, goal) || cells(goal.row, goal.col) != Cell::Floor) {
    throw MalformedMap("goal is not an in-bounds floor cell");
  }
  if (bfs(cells, start)(goal.row, goal.col) < 0) {
    throw UnreachableGoal("goal is not reachable from start");
  }
  GridMap m;
  m.cells_ = std::move(cells);
  m.start_ = start;
  m.goal_ = goal;
  m.id_ = std::move(id);
  m.pair_id_ = std::move(pair_id);
  return m;
}

Seen Observation::at(Position map_pos) const {
  const Position local{map_pos.row - center.row + radius, map_pos.col - center.col + radius};
  if (!in_bounds(window, local)) return Seen::Unknown;
  return window(local.row, local.col);
}

GridMap parse_map(std::string_view text) {
  std::vector<std::string> lines;
  {
    std::size_t begin = 0;
    while (begin < text.size()) {
      std::size_t end = text.find('\n', begin);
      if (end == std::string_view::npos) end = text.size();
      lines.push_back(trim_cr(text.substr(begin, end - begin)));
      begin = end + 1;
    }
  }

  std::string id;
  std::string pair_id;
  std::size_t row0 = 0;
  for (; row0 < lines.size() && !lines[row0].empty() && lines[row0][0] == '@'; ++row0) {
    const std::string& line = lines[row0];
    const auto space = line.find(' ');
    if (space == std::string::npos) throw MalformedMap("header line without value: " + line);
    const std::string key = line.substr(1, space - 1);
    const std::string value = line.substr(space + 1);
    if (key == "id") {
      id = value;
    } else if (key == "pair_id") {
      pair_id = value;
    } else {
      throw MalformedMap("unknown header key '" + key + "'");
    }
  }
  while (!lines.empty() && lines.back().empty() && lines.size() > row0) lines.pop_back();
  if (lines.size() <= row0) throw MalformedMap("map has no rows");

  const int height = static_cast<int>(lines.size() - row0);
  const int width = static_cast<int>(lines[row0].size());
  if (width == 0) throw MalformedMap("empty map row");
  Grid<Cell> cells(height, width);
  std::optional<Position> start;
  std::optional<Position> goal;
  for (int r = 0; r < height; ++r) {
    const std::string& line = lines[row0 + r];
    if (static_cast<int>(line.size()) != width) {
      throw MalformedMap("ragged row " + std::to_string(r) + ": expected width " +
                         std::to_string(width));
    }
    for (int c = 0; c < width; ++c) {
      switch (line[c]) {
        case '#': cells(r, c) = Cell::Wall; break;
        case '.': cells(r, c) = Cell::Floor; break;
        case 'S':
          if (start) throw MalformedMap("duplicate start 'S'");
          start = Position{r, c};
          cells(r, c) = Cell::Floor;
          break;
        case 'G':
          if (goal) throw MalformedMap("duplicate goal 'G'");
          goal = Position{r, c};
          cells(r, c) = Cell::Floor;
          break;
        default:
          throw MalformedMap("illegal character at row " + std::to_string(r) + ", col " +
                             std::to_string(c));
      }
    }
  }
  if (!start) throw MalformedMap("missing start 'S'");
  if (!goal) throw MalformedMap("missing goal 'G'");
  return GridMap::create(std::move(cells), *start, *goal, std::move(id), std::move(pair_id));
}

std::string serialize_map(const GridMap& map) {
  std::string out;
  if (!map.id().empty()) out += "@id " + map.id() + "\n";
  if (!map.pair_id().empty()) out += "@pair_id " + map.pair_id() + "\n";
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) {
      const Position p{r, c};
      if (p == map.goal()) {
        out += 'G';
      } else if (p == map.start()) {
        out += 'S';
      } else {
        out += map.cells()(r, c) == Cell::Floor ? '.' : '#';
      }
    }
    out += '\n';
  }
  return out;
}

GridMap load_map_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedMap("cannot open map file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  GridMap map = parse_map(buf.str());
  if (map.id().empty()) {
    return GridMap::create(map.cells(), map.start(), map.goal(),
                           std::filesystem::path(path).stem().string(), map.pair_id());
  }
  return map;
}

std::vector<GridMap> load_map_dir(const std::string& dir) {
  std::vector<GridMap> maps;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".map") {
      maps.push_back(load_map_file(entry.path().string()));
    }
  }
  std::sort(maps.begin(), maps.end(),
            [](const GridMap& a, const GridMap& b) { return a.id() < b.id(); });
  return maps;
}

Position step(const GridMap& map, Position pos, Action action) {
  const Position next = offset(pos, action);
  return map.is_floor(next) ? next : pos;
}

Observation observe(const GridMap& map, Position pos, int radius, int steps_taken) {
  Observation obs;
  obs.center = pos;
  obs.radius = radius;
  obs.steps_taken = steps_taken;
  const int size = 2 * radius + 1;
  obs.window = Grid<Seen>::Constant(size, size, Seen::Unknown);
  for (int dr = -radius; dr <= radius; ++dr) {
    for (int dc = -radius; dc <= radius; ++dc) {
      const Position p{pos.row + dr, pos.col + dc};
      if (!map.contains(p)) continue;
      Seen s = map.cells()(p.row, p.col) == Cell::Floor ? Seen::Floor : Seen::Wall;
      if (p == map.goal()) s = Seen::Goal;
      obs.window(dr + radius, dc + radius) = s;
    }
  }
  return obs;
}

std::optional<int> shortest_path_length(const GridMap& map, Position from, Position to) {
  if (!map.is_floor(from) || !map.is_floor(to)) return std::nullopt;
  const int d = bfs(map.cells(), from)(to.row, to.col);
  if (d < 0) return std::nullopt;
  return d;
}

Grid<int> distance_field(const GridMap& map, Position source) { return bfs(map.cells(), source); }

std::vector<Action> shortest_path_actions(const GridMap& map, Position from, Position to) {
  // Successor pointers from a goal-rooted BFS: each cell records the action
  // that leads to the neighbour which discovered it.
  const Grid<Cell>& cells = map.cells();
  Grid<int> toward = Grid<int>::Constant(cells.rows(), cells.cols(), -1);
  Grid<bool> seen = Grid<bool>::Constant(cells.rows(), cells.cols(), false);
  std::deque<Position> queue{to};
  seen(to.row, to.col) = true;
  while (!queue.empty()) {
    const Position p = queue.front();
    queue.pop_front();
    if (p == from) break;
    for (Action a : kActions) {
      const Position q = offset(p, a);
      if (!map.is_floor(q) || seen(q.row, q.col)) continue;
      seen(q.row, q.col) = true;
      toward(q.row, q.col) = index_of(opposite(a));
      queue.push_back(q);
    }
  }
  std::vector<Action> path;
  if (!seen(from.row, from.col)) return path;
  for (Position p = from; p != to;) {
    const auto a = static_cast<Action>(toward(p.row, p.col));
    path.push_back(a);
    p = offset(p, a);
  }
  return path;
}

MapMetrics graph_metrics(const GridMap& map) {
  const Grid<int> dist = bfs(map.cells(), map.start());
  int reachable = 0;
  int brittle = 0;
  int open = 0;
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) {
      if (dist(r, c) < 0) continue;
      ++reachable;
      int degree = 0;
      for (Action a : kActions) degree += map.is_floor(offset({r, c}, a)) ? 1 : 0;
      if (degree == 1 || degree == 2) {
        ++brittle;
      } else if (degree >= 3) {
        ++open;
      }
    }
  }
  MapMetrics m;
  m.reachable_cells = reachable;
  m.brittleness = static_cast<double>(brittle) / reachable;
  m.openness = static_cast<double>(open) / reachable;
  m.shortest_path = dist(map.goal().row, map.goal().col);
  return m;
}

}  // namespace wayfinder
