#ifndef BSLAB_COMMON_TEXT_HPP_
#define BSLAB_COMMON_TEXT_HPP_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bslab {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
// Whole-string parse; throws ParseError naming `what` on failure.
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

// Unquoted comma-separated fields.
std::vector<std::string> split_csv_line(std::string_view line);

// Whole-file helpers; DataError on I/O failure.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view text);

}  // namespace bslab

#endif  // BSLAB_COMMON_TEXT_HPP_
