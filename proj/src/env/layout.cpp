#include "bslab/env/layout.hpp"

#include <cstdlib>
#include <fstream>
#include <queue>
#include <sstream>

#include "bslab/common/error.hpp"

#ifndef BSLAB_SOURCE_LAYOUT_DIR
#define BSLAB_SOURCE_LAYOUT_DIR "layouts"
#endif

namespace bslab::env {
namespace {

std::string where(int row, int col) {
  return "row " + std::to_string(row) + ", column " + std::to_string(col);
}

int parse_positive(const std::string& key, const std::string& value,
                   int line_no) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size() || v <= 0) {
    throw ParseError("layout line " + std::to_string(line_no) + ": " + key +
                     " expects a positive integer, got '" + value + "'");
  }
  return v;
}

bool is_header_line(const std::string& line) {
  for (const char* key : {"name ", "cook_time ", "episode_length "}) {
    if (line.rfind(key, 0) == 0) return true;
  }
  return false;
}

}  // namespace

char tile_char(Tile t) {
  switch (t) {
    case Tile::Floor: return ' ';
    case Tile::Counter: return '#';
    case Tile::OnionPile: return 'O';
    case Tile::DishPile: return 'D';
    case Tile::Pot: return 'P';
    case Tile::DeliveryZone: return 'S';
  }
  return '?';
}

Layout parse_layout(std::string_view text) {
  std::vector<std::string> lines;
  {
    std::string s(text);
    std::istringstream is(s);
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();

  Layout layout;
  std::size_t i = 0;
  bool have_name = false;
  for (; i < lines.size() && is_header_line(lines[i]); ++i) {
    const std::string& line = lines[i];
    const auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    std::string value = line.substr(space + 1);
    while (!value.empty() && value.back() == ' ') value.pop_back();
    const int line_no = static_cast<int>(i) + 1;
    if (key == "name") {
      if (i != 0) throw ParseError("layout: 'name' must be the first line");
      if (value.empty() || value.find(' ') != std::string::npos) {
        throw ParseError("layout line 1: invalid name '" + value + "'");
      }
      layout.name = value;
      have_name = true;
    } else if (key == "cook_time") {
      layout.cook_time = parse_positive(key, value, line_no);
    } else {
      layout.episode_length = parse_positive(key, value, line_no);
    }
  }
  if (!have_name) throw ParseError("layout: first line must be 'name <id>'");

  std::vector<std::string> grid(lines.begin() + static_cast<std::ptrdiff_t>(i),
                                lines.end());
  if (grid.empty()) throw ParseError("layout '" + layout.name + "': empty grid");
  layout.height = static_cast<int>(grid.size());
  layout.width = static_cast<int>(grid.front().size());
  if (layout.width == 0) throw ParseError("layout: grid row 0 is empty");

  std::vector<std::pair<int, Cell>> spawns;
  layout.tiles.reserve(static_cast<std::size_t>(layout.width * layout.height));
  for (int y = 0; y < layout.height; ++y) {
    const std::string& row = grid[static_cast<std::size_t>(y)];
    if (static_cast<int>(row.size()) != layout.width) {
      throw ParseError("layout: " + where(y, static_cast<int>(row.size())) +
                       ": row length " + std::to_string(row.size()) +
                       " differs from width " + std::to_string(layout.width));
    }
    for (int x = 0; x < layout.width; ++x) {
      const char ch = row[static_cast<std::size_t>(x)];
      Tile t{};
      switch (ch) {
        case '#': t = Tile::Counter; break;
        case ' ': t = Tile::Floor; break;
        case 'O': t = Tile::OnionPile; break;
        case 'D': t = Tile::DishPile; break;
        case 'P': t = Tile::Pot; break;
        case 'S': t = Tile::DeliveryZone; break;
        case '1':
        case '2':
          t = Tile::Floor;
          spawns.emplace_back(ch - '1', Cell{x, y});
          break;
        default:
          throw ParseError("layout: malformed character '" + std::string(1, ch) +
                           "' at " + where(y, x));
      }
      const bool boundary =
          x == 0 || y == 0 || x == layout.width - 1 || y == layout.height - 1;
      if (boundary && t == Tile::Floor) {
        throw ParseError("layout: floor on grid boundary at " + where(y, x));
      }
      layout.tiles.push_back(t);
      switch (t) {
        case Tile::Pot: layout.pots.push_back({x, y}); break;
        case Tile::OnionPile: layout.onion_piles.push_back({x, y}); break;
        case Tile::DishPile: layout.dish_piles.push_back({x, y}); break;
        case Tile::DeliveryZone: layout.delivery_zones.push_back({x, y}); break;
        default: break;
      }
    }
  }

  if (spawns.size() != 2) {
    throw ParseError("layout '" + layout.name + "': expected 2 spawn points, found " +
                     std::to_string(spawns.size()));
  }
  if (spawns[0].first == spawns[1].first) {
    const Cell c = spawns[1].second;
    throw ParseError("layout: duplicate spawn '" + std::to_string(spawns[1].first + 1) +
                     "' at " + where(c.y, c.x));
  }
  for (const auto& [seat, cell] : spawns) layout.spawns[static_cast<std::size_t>(seat)] = cell;

  // Flood fill floor from both spawns.
  std::vector<char> reached(layout.tiles.size(), 0);
  std::queue<Cell> frontier;
  for (const Cell& s : layout.spawns) {
    reached[static_cast<std::size_t>(s.y * layout.width + s.x)] = 1;
    frontier.push(s);
  }
  constexpr std::array<Cell, 4> kSteps{{{0, -1}, {0, 1}, {1, 0}, {-1, 0}}};
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop();
    for (const Cell& d : kSteps) {
      const Cell n{c.x + d.x, c.y + d.y};
      if (!layout.walkable(n)) continue;
      auto& r = reached[static_cast<std::size_t>(n.y * layout.width + n.x)];
      if (!r) {
        r = 1;
        frontier.push(n);
      }
    }
  }
  auto reachable = [&](Cell c) {
    for (const Cell& d : kSteps) {
      const Cell n{c.x + d.x, c.y + d.y};
      if (layout.in_bounds(n) && reached[static_cast<std::size_t>(n.y * layout.width + n.x)]) {
        return true;
      }
    }
    return false;
  };
  auto require = [&](const std::vector<Cell>& cells, const char* what) {
    if (cells.empty()) {
      throw ParseError("layout '" + layout.name + "': missing required tile " + what);
    }
    for (const Cell& c : cells) {
      if (reachable(c)) return;
    }
    throw ParseError("layout '" + layout.name + "': unreachable required tile " +
                     what + " at " + where(cells.front().y, cells.front().x));
  };
  require(layout.pots, "Pot");
  require(layout.onion_piles, "OnionPile");
  require(layout.dish_piles, "DishPile");
  require(layout.delivery_zones, "DeliveryZone");
  return layout;
}

Layout load_layout_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open layout file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_layout(os.str());
}

std::filesystem::path default_layout_dir() {
  if (const char* env = std::getenv("BSLAB_LAYOUT_DIR"); env && *env) return env;
  return BSLAB_SOURCE_LAYOUT_DIR;
}

const std::vector<std::string>& standard_layout_names() {
  static const std::vector<std::string> names{
      "cramped_room", "forced_coordination", "coordination_ring",
      "counter_circuit", "asymmetric_advantages"};
  return names;
}

LayoutPtr with_episode_length(const LayoutPtr& layout, int episode_length) {
  if (episode_length <= 0) throw ContractError("episode_length must be positive");
  if (layout->episode_length == episode_length) return layout;
  auto copy = std::make_shared<Layout>(*layout);
  copy->episode_length = episode_length;
  return copy;
}

LayoutPtr load_named_layout(const std::string& name,
                            const std::filesystem::path& dir) {
  const auto path = dir / (name + ".layout");
  if (!std::filesystem::exists(path)) {
    throw DataError("unknown layout '" + name + "' (no " + path.string() + ")");
  }
  auto layout = std::make_shared<Layout>(load_layout_file(path));
  if (layout->name != name) {
    throw DataError("layout file " + path.string() + " declares name '" +
                    layout->name + "'");
  }
  return layout;
}

}  // namespace bslab::env
