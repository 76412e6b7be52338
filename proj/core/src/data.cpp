// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "splitveil/error.hpp"
#include "splitveil/rng.hpp"

namespace splitveil {

void assign_split(Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ParameterError("test_fraction must be in (0, 1)");
  Rng rng(mix_seed(seed, 0x5b1170));
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.y.num_classes));
  for (std::size_t i = 0; i < data.y.size(); ++i) by_class[static_cast<std::size_t>(data.y[i])].push_back(i);
  std::size_t smallest = data.y.size();
  for (auto& members : by_class) {
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.index(i)]);
    if (!members.empty()) smallest = std::min(smallest, members.size());
  }
  data.train.clear();
  data.test.clear();
  for (const auto& members : by_class) {
    std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    if (data.y.num_classes == 2)
      n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(smallest)));
    n_test = std::min(n_test, members.size());
    data.test.insert(data.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    data.train.insert(data.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::ranges::sort(data.train);
  std::ranges::sort(data.test);
}

namespace {

Dataset make_blobs(std::size_t n, std::size_t d, int classes, Rng& rng) {
  // Centers on a regular simplex scaled so every pair is 10 apart.
  Tensor centers(static_cast<std::size_t>(classes), d);
  const double scale = 10.0 / std::sqrt(2.0);
  // A random orthonormal frame keeps the geometry exact regardless of d.
  Tensor frame = rng.normal_tensor(static_cast<std::size_t>(classes), d);
  for (std::size_t c = 0; c < frame.rows(); ++c) {
    auto r = frame.row(c);
    for (std::size_t p = 0; p < c; ++p) {
      const auto q = frame.row(p);
      double proj = 0.0;
      for (std::size_t k = 0; k < d; ++k) proj += r[k] * q[k];
      for (std::size_t k = 0; k < d; ++k) r[k] -= proj * q[k];
    }
    double len = 0.0;
    for (double v : r) len += v * v;
    len = std::sqrt(len);
    for (double& v : r) v /= len;
  }
  for (std::size_t c = 0; c < centers.rows(); ++c)
    for (std::size_t k = 0; k < d; ++k) centers(c, k) = scale * frame(c, k);

  Dataset data;
  data.x = rng.normal_tensor(n, d);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
    for (std::size_t k = 0; k < d; ++k) data.x(i, k) += centers(static_cast<std::size_t>(labels[i]), k);
  }
  data.y = LabelVector(std::move(labels), classes);
  return data;
}

Dataset make_xor(std::size_t n, std::size_t d, Rng& rng) {
  if (d < 2) throw ConfigError("xor_embed needs input_dim >= 2");
  Dataset data;
  data.x = rng.normal_tensor(n, d, 0.25);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = (i % 2 == 0) ? 1.0 : -1.0;
    const double b = ((i / 2) % 2 == 0) ? 1.0 : -1.0;
    data.x(i, 0) += a;
    data.x(i, 1) += b;
    labels[i] = a * b > 0 ? 1 : 0;
  }
  data.y = LabelVector(std::move(labels), 2);
  return data;
}

Dataset make_teacher(std::size_t n, std::size_t d, Rng& rng) {
  constexpr std::size_t kHidden = 32;
  Dataset data;
  data.x = rng.normal_tensor(n, d);
  Rng teacher = rng.fork(0x7eac4e5);
  const Tensor w1 = teacher.normal_tensor(kHidden, d, 1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor w2 = teacher.normal_tensor(1, kHidden, 1.0 / std::sqrt(static_cast<double>(kHidden)));
  Tensor hidden = matmul_nt(data.x, w1);
  for (double& v : hidden.data()) v = std::tanh(2.0 * v);
  const Tensor score = matmul_nt(hidden, w2);
  std::vector<double> sorted(score.values());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
  const double median = sorted[n / 2];
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = score(i, 0) >= median ? 1 : 0;
  data.y = LabelVector(std::move(labels), 2);
  return data;
}

}  // namespace

Dataset make_synthetic(std::string_view task, std::size_t num_examples, std::size_t input_dim, std::uint64_t seed) {
  if (num_examples < 10) throw ConfigError("synthetic datasets need at least 10 examples");
  if (input_dim == 0) throw ConfigError("input_dim must be positive");
  Rng rng(seed);
  Dataset data;
  if (task == "blobs2") {
    if (input_dim < 2) throw ConfigError("blobs2 needs input_dim >= 2");
    data = make_blobs(num_examples, input_dim, 2, rng);
  } else if (task == "blobs3") {
    if (input_dim < 3) throw ConfigError("blobs3 needs input_dim >= 3");
    data = make_blobs(num_examples, input_dim, 3, rng);
  } else if (task == "xor_embed") {
    data = make_xor(num_examples, input_dim, rng);
  } else if (task == "teacher") {
    data = make_teacher(num_examples, input_dim, rng);
  } else {
    throw ConfigError("unknown synthetic task '" + std::string(task) + "'");
  }
  data.provenance = "synthetic:" + std::string(task) + ":n=" + std::to_string(num_examples) +
                    ":d=" + std::to_string(input_dim) + ":seed=" + std::to_string(seed);
  assign_split(data, 0.2, seed);
  return data;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Dataset parse_csv(std::string_view text, std::uint64_t split_seed, double test_fraction) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    lines.push_back(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("empty CSV file", 1);

  const std::size_t columns = split_fields(lines[0]).size();
  if (columns < 2) {
    throw ParseError("header has " + std::to_string(columns) +
                         " column; need at least one feature column and a label column",
                     1);
  }
  if (lines.size() < 2) throw ParseError("CSV has a header but no rows", 1);

  const std::size_t rows = lines.size() - 1;
  Tensor x(rows, columns - 1);
  std::vector<int> labels(rows);
  int max_label = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t line_no = r + 2;
    const auto fields = split_fields(lines[r + 1]);
    if (fields.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " columns, got " + std::to_string(fields.size()),
                       line_no);
    }
    for (std::size_t c = 0; c + 1 < columns; ++c) {
      const std::string_view f = trim(fields[c]);
      double v = 0.0;
      const auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || ec != std::errc() || end != f.data() + f.size() || !std::isfinite(v)) {
        throw ParseError("column " + std::to_string(c + 1) + ": '" + std::string(f) + "' is not a finite number",
                         line_no);
      }
      x(r, c) = v;
    }
    const std::string_view lf = trim(fields.back());
    int label = 0;
    const auto [end, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (lf.empty() || ec != std::errc() || end != lf.data() + lf.size() || label < 0) {
      throw ParseError("label '" + std::string(lf) + "' is not a non-negative integer", line_no);
    }
    labels[r] = label;
    max_label = std::max(max_label, label);
  }
  Dataset data;
  data.x = std::move(x);
  data.y = LabelVector(std::move(labels), std::max(2, max_label + 1));
  assign_split(data, test_fraction, split_seed);
  return data;
}

Dataset load_csv(const std::filesystem::path& path, std::uint64_t split_seed, double test_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  Dataset data = parse_csv(buf.str(), split_seed, test_fraction);
  data.provenance = "csv:" + path.string();
  return data;
}

std::string to_csv(const Dataset& data) {
  std::string out;
  for (std::size_t c = 0; c < data.x.cols(); ++c) out += "x" + std::to_string(c) + ",";
  out += "label\n";
  char buf[64];
  for (std::size_t r = 0; r < data.x.rows(); ++r) {
    for (std::size_t c = 0; c < data.x.cols(); ++c) {
      const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, data.x(r, c));
      (void)ec;
      out.append(buf, end);
      out += ',';
    }
    out += std::to_string(data.y[r]);
    out += '\n';
  }
  return out;
}

void save_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw ConfigError("cannot write '" + path.string() + "'");
  outf << to_csv(data);
}

}  // namespace splitveil
