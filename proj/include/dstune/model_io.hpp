#pragma once

// Plain-text model files.
//
//   # comment
//   name <identifier>          (optional)
//   dims n m p m1 p1
//   A
//   <n rows of n values>
//   B
//   <n rows of m values>
//   C
//   <p rows of n values>
//   B1 / C1 / D11 / D12 / D21  (optional, default zero)
//
// Values are written in shortest round-trip form, so
// parse_model(serialize_model(m)) reproduces m bit for bit.

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dstune/lti.hpp"

namespace dstune {

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw NumericalError("cannot format double");
  return std::string(buf, end);
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline double parse_number(std::string_view tok, int line) {
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError("not a number: '" + std::string(tok) + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite entry '" + std::string(tok) + "'", line);
  return v;
}

inline long parse_dim(std::string_view tok, int line) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || v < 1)
    throw ParseError("bad dimension '" + std::string(tok) + "'", line);
  return v;
}

}  // namespace detail

inline StateSpaceModel parse_model(std::string_view text) {
  struct Line {
    int number;
    std::vector<std::string_view> tokens;
  };
  std::vector<Line> lines;
  {
    int number = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t nl = text.find('\n', pos);
      std::string_view raw =
          text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      ++number;
      if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
      auto toks = detail::split_ws(raw);
      if (!toks.empty()) lines.push_back({number, std::move(toks)});
      if (nl == std::string_view::npos) break;
      pos = nl + 1;
    }
  }

  std::size_t li = 0;
  StateSpaceModel model;
  if (li < lines.size() && lines[li].tokens[0] == "name") {
    if (lines[li].tokens.size() != 2) throw ParseError("name takes one identifier", lines[li].number);
    model.name = std::string(lines[li].tokens[1]);
    ++li;
  }
  if (li >= lines.size() || lines[li].tokens[0] != "dims")
    throw ParseError("expected 'dims n m p m1 p1' header",
                     li < lines.size() ? lines[li].number : 1);
  const auto& hdr = lines[li];
  if (hdr.tokens.size() != 6 && hdr.tokens.size() != 4)
    throw ParseError("dims needs n m p [m1 p1]", hdr.number);
  const long n = detail::parse_dim(hdr.tokens[1], hdr.number);
  const long m = detail::parse_dim(hdr.tokens[2], hdr.number);
  const long p = detail::parse_dim(hdr.tokens[3], hdr.number);
  const long m1 = hdr.tokens.size() == 6 ? detail::parse_dim(hdr.tokens[4], hdr.number) : 1;
  const long p1 = hdr.tokens.size() == 6 ? detail::parse_dim(hdr.tokens[5], hdr.number) : 1;
  ++li;

  const std::map<std::string_view, std::pair<long, long>> shapes = {
      {"A", {n, n}},     {"B", {n, m}},     {"C", {p, n}},     {"B1", {n, m1}},
      {"C1", {p1, n}},   {"D11", {p1, m1}}, {"D12", {p1, m}},  {"D21", {p, m1}},
  };
  std::map<std::string_view, Matrix> blocks;

  while (li < lines.size()) {
    const auto& head = lines[li];
    const auto it = shapes.find(head.tokens[0]);
    if (it == shapes.end() || head.tokens.size() != 1)
      throw ParseError("expected a block name (A, B, C, B1, C1, D11, D12, D21), got '" +
                           std::string(head.tokens[0]) + "'",
                       head.number);
    if (blocks.count(it->first)) throw ParseError("duplicate block " + std::string(it->first), head.number);
    const auto [rows, cols] = it->second;
    Matrix mat(rows, cols);
    ++li;
    for (long r = 0; r < rows; ++r, ++li) {
      if (li >= lines.size())
        throw ParseError("block " + std::string(it->first) + " ends after " + std::to_string(r) +
                             " of " + std::to_string(rows) + " rows",
                         lines.back().number);
      const auto& row = lines[li];
      if (static_cast<long>(row.tokens.size()) != cols)
        throw ParseError("row of block " + std::string(it->first) + " has " +
                             std::to_string(row.tokens.size()) + " values, expected " +
                             std::to_string(cols),
                         row.number);
      for (long c = 0; c < cols; ++c) mat(r, c) = detail::parse_number(row.tokens[c], row.number);
    }
    blocks.emplace(it->first, std::move(mat));
  }

  for (const char* req : {"A", "B", "C"}) {
    if (!blocks.count(req)) throw ParseError(std::string("missing required block ") + req, hdr.number);
  }
  auto take = [&](std::string_view key) {
    if (auto it = blocks.find(key); it != blocks.end()) return it->second;
    const auto [r, c] = shapes.at(key);
    return Matrix(Matrix::Zero(r, c));
  };
  model.a = take("A");
  model.b = take("B");
  model.c = take("C");
  model.b1 = take("B1");
  model.c1 = take("C1");
  model.d11 = take("D11");
  model.d12 = take("D12");
  model.d21 = take("D21");
  return model;
}

inline std::string serialize_model(const StateSpaceModel& model) {
  model.validate();
  std::ostringstream os;
  if (!model.name.empty()) os << "name " << model.name << "\n";
  os << "dims " << model.states() << ' ' << model.inputs() << ' ' << model.outputs() << ' '
     << model.disturbances() << ' ' << model.performance_outputs() << "\n";
  auto block = [&os](const char* label, const Matrix& m) {
    os << label << "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c) os << ' ';
        os << format_double(m(r, c));
      }
      os << "\n";
    }
  };
  block("A", model.a);
  block("B", model.b);
  block("C", model.c);
  block("B1", model.b1);
  block("C1", model.c1);
  block("D11", model.d11);
  block("D12", model.d12);
  block("D21", model.d21);
  return os.str();
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

inline StateSpaceModel load_model(const std::string& path) {
  auto model = parse_model(read_text_file(path));
  if (model.name.empty()) {
    const auto slash = path.find_last_of('/');
    std::string stem = path.substr(slash == std::string::npos ? 0 : slash + 1);
    if (const auto dot = stem.rfind('.'); dot != std::string::npos && dot > 0) stem.resize(dot);
    model.name = stem;
  }
  return model;
}

}  // namespace dstune
