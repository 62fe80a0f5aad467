#ifndef BSLAB_ENV_LAYOUT_HPP_
#define BSLAB_ENV_LAYOUT_HPP_

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace bslab::env {

enum class Tile : std::uint8_t {
  Floor,
  Counter,
  OnionPile,
  DishPile,
  Pot,
  DeliveryZone,
};

// Grid coordinate; x grows east, y grows south. Ordered row-major.
struct Cell {
  int x = 0;
  int y = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
  friend std::strong_ordering operator<=>(const Cell& a, const Cell& b) {
    if (auto c = a.y <=> b.y; c != 0) return c;
    return a.x <=> b.x;
  }
};

inline constexpr int kDefaultCookTime = 20;
inline constexpr int kDefaultEpisodeLength = 1000;

// Static grid definition. Seat 0 is the blue-hat (human) seat, seat 1 the
// green-hat (AI) seat.
struct Layout {
  std::string name;
  int width = 0;
  int height = 0;
  std::vector<Tile> tiles;  // row-major, width * height
  std::array<Cell, 2> spawns{};
  int cook_time = kDefaultCookTime;
  int episode_length = kDefaultEpisodeLength;

  // Derived indices, filled by parse_layout (row-major order).
  std::vector<Cell> pots;
  std::vector<Cell> onion_piles;
  std::vector<Cell> dish_piles;
  std::vector<Cell> delivery_zones;

  bool in_bounds(Cell c) const {
    return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height;
  }
  Tile at(Cell c) const { return tiles[static_cast<std::size_t>(c.y * width + c.x)]; }
  bool walkable(Cell c) const { return in_bounds(c) && at(c) == Tile::Floor; }
  int pot_count() const { return static_cast<int>(pots.size()); }
};

using LayoutPtr = std::shared_ptr<const Layout>;

// Parses the layout file grammar:
//   name <id>
//   [cook_time <n>]
//   [episode_length <n>]
//   <grid rows>
// Grid characters: '#' counter, ' ' floor, 'O' onion pile, 'D' dish pile,
// 'P' pot, 'S' delivery zone, '1'/'2' spawns (floor) for seat 0 / seat 1.
// Throws ParseError naming the offending row/column.
Layout parse_layout(std::string_view text);

Layout load_layout_file(const std::filesystem::path& path);

// Directory holding the shipped *.layout files. Resolution order: the
// BSLAB_LAYOUT_DIR environment variable, then the compiled-in source path.
std::filesystem::path default_layout_dir();

// Loads `<dir>/<name>.layout`; throws DataError for unknown names.
LayoutPtr load_named_layout(const std::string& name,
                            const std::filesystem::path& dir = default_layout_dir());

// The five benchmark layout names, in canonical order.
const std::vector<std::string>& standard_layout_names();

// Copy of `layout` with a different episode length (> 0).
LayoutPtr with_episode_length(const LayoutPtr& layout, int episode_length);

char tile_char(Tile t);

}  // namespace bslab::env

#endif  // BSLAB_ENV_LAYOUT_HPP_
