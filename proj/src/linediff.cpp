#include "vulnhound/linediff.hpp"

#include <algorithm>
#include <set>

namespace vulnhound::linediff {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n') {
      lines.push_back(text.substr(start, i + 1 - start));
      start = i + 1;
    }
  }
  if (start < text.size()) lines.push_back(text.substr(start));
  return lines;
}

namespace {

enum class Op { Equal, Delete, Insert };

// Myers greedy shortest edit script; returns nullopt-equivalent (empty with
// `ok = false`) when the distance exceeds `max_edits`.
std::vector<Op> myers(const std::string_view* a, long n, const std::string_view* b, long m, long max_edits,
                      bool& ok) {
  const long max = n + m;
  const long limit = std::min(max, max_edits);
  std::vector<long> v(2 * static_cast<std::size_t>(max) + 3, 0);
  const long offset = max + 1;
  std::vector<std::vector<long>> trace;  // trace[d][k + d] = furthest x on diagonal k after step d
  ok = false;
  long final_d = -1;
  for (long d = 0; d <= limit && final_d < 0; ++d) {
    for (long k = -d; k <= d; k += 2) {
      long x = (k == -d || (k != d && v[offset + k - 1] < v[offset + k + 1])) ? v[offset + k + 1]
                                                                              : v[offset + k - 1] + 1;
      long y = x - k;
      while (x < n && y < m && a[x] == b[y]) {
        ++x;
        ++y;
      }
      v[offset + k] = x;
      if (x >= n && y >= m) final_d = d;
    }
    trace.emplace_back(v.begin() + (offset - d), v.begin() + (offset + d + 1));
  }
  if (final_d < 0) return {};
  ok = true;

  std::vector<Op> ops;
  long x = n, y = m;
  for (long d = final_d; d > 0; --d) {
    const auto& prev = trace[d - 1];
    auto at = [&](long k) { return prev[k + d - 1]; };
    const long k = x - y;
    const long prev_k = (k == -d || (k != d && at(k - 1) < at(k + 1))) ? k + 1 : k - 1;
    const long prev_x = at(prev_k);
    const long prev_y = prev_x - prev_k;
    while (x > prev_x && y > prev_y) {
      ops.push_back(Op::Equal);
      --x;
      --y;
    }
    ops.push_back(x == prev_x ? Op::Insert : Op::Delete);
    x = prev_x;
    y = prev_y;
  }
  while (x > 0 && y > 0) {
    ops.push_back(Op::Equal);
    --x;
    --y;
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

}  // namespace

std::vector<Hunk> diff(const std::vector<std::string_view>& old_lines, const std::vector<std::string_view>& new_lines,
                       std::size_t max_edits) {
  std::size_t prefix = 0;
  while (prefix < old_lines.size() && prefix < new_lines.size() && old_lines[prefix] == new_lines[prefix]) ++prefix;
  std::size_t suffix = 0;
  while (suffix < old_lines.size() - prefix && suffix < new_lines.size() - prefix &&
         old_lines[old_lines.size() - 1 - suffix] == new_lines[new_lines.size() - 1 - suffix])
    ++suffix;
  const long n = static_cast<long>(old_lines.size() - prefix - suffix);
  const long m = static_cast<long>(new_lines.size() - prefix - suffix);
  if (n == 0 && m == 0) return {};

  bool ok = false;
  std::vector<Op> ops = myers(old_lines.data() + prefix, n, new_lines.data() + prefix, m,
                              static_cast<long>(max_edits), ok);
  if (!ok) {
    ops.assign(static_cast<std::size_t>(n), Op::Delete);
    ops.insert(ops.end(), static_cast<std::size_t>(m), Op::Insert);
  }

  std::vector<Hunk> hunks;
  std::size_t i = prefix, j = prefix;
  std::size_t idx = 0;
  while (idx < ops.size()) {
    if (ops[idx] == Op::Equal) {
      ++i;
      ++j;
      ++idx;
      continue;
    }
    Hunk h{i, 0, j, 0};
    while (idx < ops.size() && ops[idx] != Op::Equal) {
      if (ops[idx] == Op::Delete) {
        ++h.old_count;
        ++i;
      } else {
        ++h.new_count;
        ++j;
      }
      ++idx;
    }
    hunks.push_back(h);
  }
  return hunks;
}

std::vector<std::size_t> changed_old_lines(const std::vector<Hunk>& hunks, std::size_t old_line_count) {
  std::set<std::size_t> lines;
  if (old_line_count == 0) return {};
  for (const auto& h : hunks) {
    if (h.old_count > 0) {
      for (std::size_t k = 0; k < h.old_count; ++k) lines.insert(h.old_start + k + 1);
    } else {
      lines.insert(std::clamp<std::size_t>(h.old_start, 1, old_line_count));
    }
  }
  return {lines.begin(), lines.end()};
}

}  // namespace vulnhound::linediff
