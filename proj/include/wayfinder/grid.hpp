#pragma once

#include <Eigen/Core>

#include <array>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string_view>

namespace wayfinder {

/// Dense row-major cell field. Row 0 is the top of the map.
template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Position {
  int row = 0;
  int col = 0;

  friend constexpr auto operator<=>(const Position&, const Position&) = default;
};

constexpr int manhattan(Position a, Position b) {
  return std::abs(a.row - b.row) + std::abs(a.col - b.col);
}

/// Canonical order Up < Down < Left < Right is used for every tie-break.
enum class Action : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };

inline constexpr std::array<Action, 4> kActions = {Action::Up, Action::Down, Action::Left,
                                                   Action::Right};

constexpr int index_of(Action a) { return static_cast<int>(a); }

constexpr Position offset(Position p, Action a) {
  switch (a) {
    case Action::Up: return {p.row - 1, p.col};
    case Action::Down: return {p.row + 1, p.col};
    case Action::Left: return {p.row, p.col - 1};
    case Action::Right: return {p.row, p.col + 1};
  }
  return p;
}

constexpr Action opposite(Action a) {
  switch (a) {
    case Action::Up: return Action::Down;
    case Action::Down: return Action::Up;
    case Action::Left: return Action::Right;
    case Action::Right: return Action::Left;
  }
  return a;
}

/// Upper-case token: "UP", "DOWN", "LEFT", "RIGHT".
std::string_view to_token(Action a);

/// Case-insensitive inverse of to_token. Surrounding whitespace is ignored.
std::optional<Action> parse_action(std::string_view token);

template <typename Scalar>
bool in_bounds(const Grid<Scalar>& g, Position p) {
  return p.row >= 0 && p.col >= 0 && p.row < g.rows() && p.col < g.cols();
}

}  // namespace wayfinder
