#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace vulnhound::linediff {

// Zero-context hunk. `old_start`/`new_start` are 0-based line indices; for a
// pure insertion `old_start` is the number of old lines preceding it.
struct Hunk {
  std::size_t old_start = 0;
  std::size_t old_count = 0;
  std::size_t new_start = 0;
  std::size_t new_count = 0;
  bool operator==(const Hunk&) const = default;
};

// Lines with their terminators kept, so "a" and "a\n" differ.
std::vector<std::string_view> split_lines(std::string_view text);

// Shortest edit script (Myers) over lines; the equal lines form a longest
// common subsequence. Edit distances above `max_edits` collapse the trimmed
// middle into one replacement hunk.
std::vector<Hunk> diff(const std::vector<std::string_view>& old_lines, const std::vector<std::string_view>& new_lines,
                       std::size_t max_edits = 4000);

// 1-based parent-side lines touched by the hunks: deleted or replaced lines,
// plus the line preceding each pure insertion clamped to [1, old_line_count].
std::vector<std::size_t> changed_old_lines(const std::vector<Hunk>& hunks, std::size_t old_line_count);

}  // namespace vulnhound::linediff
