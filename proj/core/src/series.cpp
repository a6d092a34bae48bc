#include "dynaconf/series.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dynaconf {

Window make_window(const Series& s, int t, int B) {
  if (t < B || t >= s.length + 1)
    throw ContractViolation("make_window: t outside valid range");
  Window w;
  w.window_len = B;
  w.dim = s.dim;
  w.cov_dim = s.cov_dim;
  w.y = {s.y.data() + static_cast<std::size_t>(t - B) * s.dim,
         static_cast<std::size_t>(B) * s.dim};
  if (s.cov_dim > 0) {
    if (t >= s.length) throw ContractViolation("make_window: covariate row missing");
    w.x = {s.x.data() + static_cast<std::size_t>(t - B) * s.cov_dim,
           static_cast<std::size_t>(B + 1) * s.cov_dim};
  }
  return w;
}

SplitSpec default_split(int T) {
  SplitSpec sp;
  sp.train_end = (T * 2) / 5;
  sp.val_end = sp.train_end + T / 5;
  return sp;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

Series read_series_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open dataset file: " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset file: " + file.string());
  auto header = split_line(line);
  if (header.empty() || header[0] != "t")
    throw DataError("dataset header must start with 't': " + file.string());
  int P = 0, Q = 0;
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i].rfind("dim_", 0) == 0) {
      if (Q > 0) throw DataError("dim_ column after x_ column in header");
      ++P;
    } else if (header[i].rfind("x_", 0) == 0) {
      ++Q;
    } else {
      throw DataError("unrecognized dataset column: " + header[i]);
    }
  }
  if (P == 0) throw DataError("dataset has no dim_ columns");

  Series s;
  s.dim = P;
  s.cov_dim = Q;
  long prev_t = -1;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (static_cast<int>(fields.size()) != 1 + P + Q)
      throw DataError("row " + std::to_string(line_no) + ": expected " +
                      std::to_string(1 + P + Q) + " columns, got " +
                      std::to_string(fields.size()));
    long t_val = 0;
    auto [p, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), t_val);
    if (ec != std::errc() || p != fields[0].data() + fields[0].size())
      throw DataError("row " + std::to_string(line_no) + ": non-integer t");
    if (t_val <= prev_t)
      throw DataError("row " + std::to_string(line_no) + ": t not strictly increasing");
    prev_t = t_val;
    for (int i = 0; i < P + Q; ++i) {
      const std::string& f = fields[1 + i];
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(f, &used);
      } catch (const std::exception&) {
        throw DataError("row " + std::to_string(line_no) + ": bad numeric field '" + f + "'");
      }
      if (used != f.size() || !std::isfinite(v))
        throw DataError("row " + std::to_string(line_no) + ": bad numeric field '" + f + "'");
      (i < P ? s.y : s.x).push_back(v);
    }
    ++s.length;
  }
  if (s.length == 0) throw DataError("dataset has no data rows");
  return s;
}

void write_series_csv(const Series& s, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write dataset file: " + file.string());
  out << "t";
  for (int i = 0; i < s.dim; ++i) out << ",dim_" << i;
  for (int i = 0; i < s.cov_dim; ++i) out << ",x_" << i;
  out << "\n";
  char buf[32];
  for (int t = 0; t < s.length; ++t) {
    out << t;
    for (int i = 0; i < s.dim; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.at(t, i));
      out << ',' << buf;
    }
    for (int i = 0; i < s.cov_dim; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g",
                    s.x[static_cast<std::size_t>(t) * s.cov_dim + i]);
      out << ',' << buf;
    }
    out << "\n";
  }
}

}  // namespace dynaconf
