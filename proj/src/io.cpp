#include "sinkdrift/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sinkdrift::io {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string tau_slug(double tau) {
  if (!(tau > 0) || !std::isfinite(tau)) throw InvalidArgument("tau_slug: tau must be positive");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", tau);
  std::string s = buf;
  for (char& c : s) {
    if (c == '.') c = 'p';
  }
  return "tau" + s;
}

std::vector<std::string> standard_comments() {
  return {"coordinates are dimensionless", "w2sq is the exact squared 2-Wasserstein distance with uniform weights 1/N"};
}

namespace {

void write_comments(std::ostream& os, const std::vector<std::string>& comments) {
  for (const auto& c : comments) os << "# " << c << '\n';
}

void write_coord_header(std::ostream& os, Eigen::Index d) {
  for (Eigen::Index k = 0; k < d; ++k) os << (k ? "," : "") << "coord_" << k;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void write_points_csv(std::ostream& os, const Eigen::MatrixXd& points, const std::vector<std::string>& comments) {
  write_comments(os, comments);
  write_coord_header(os, points.cols());
  os << '\n';
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index k = 0; k < points.cols(); ++k) os << (k ? "," : "") << format_double(points(i, k));
    os << '\n';
  }
}

void write_trajectory_csv(std::ostream& os, const FlowTrajectory<double>& traj,
                          const std::vector<std::string>& comments) {
  write_comments(os, comments);
  const Eigen::Index d = traj.snapshots.empty() ? 0 : traj.snapshots.front().points.cols();
  os << "step,particle_id";
  for (Eigen::Index k = 0; k < d; ++k) os << ",coord_" << k;
  os << '\n';
  for (const auto& snap : traj.snapshots) {
    for (Eigen::Index i = 0; i < snap.points.rows(); ++i) {
      os << snap.step << ',' << i;
      for (Eigen::Index k = 0; k < d; ++k) os << ',' << format_double(snap.points(i, k));
      os << '\n';
    }
  }
}

void write_train_csv(std::ostream& os, const std::vector<nn::TrainRecord>& records,
                     const std::vector<std::string>& comments) {
  write_comments(os, comments);
  os << "iteration,loss,w2sq,seconds\n";
  for (const auto& r : records) {
    os << r.iteration << ',' << format_double(r.loss) << ',' << format_double(r.w2sq) << ','
       << format_double(r.seconds) << '\n';
  }
}

Eigen::MatrixXd read_points_csv(std::istream& is, const std::string& source) {
  std::string line;
  long lineno = 0;
  std::vector<int> coord_cols;
  std::size_t width = 0;
  bool have_header = false;
  std::vector<double> values;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_fields(line);
    if (!have_header) {
      have_header = true;
      width = fields.size();
      // coord_k may appear in any order; map by k.
      std::vector<int> by_index;
      for (std::size_t c = 0; c < fields.size(); ++c) {
        const std::string name = trim(fields[c]);
        if (name.rfind("coord_", 0) != 0) continue;
        int k = -1;
        const char* first = name.data() + 6;
        const char* last = name.data() + name.size();
        const auto res = std::from_chars(first, last, k);
        if (res.ec != std::errc{} || res.ptr != last || k < 0) {
          throw CsvParseError(source, lineno, "bad column name '" + name + "'");
        }
        if (static_cast<std::size_t>(k) >= by_index.size()) by_index.resize(k + 1, -1);
        if (by_index[k] != -1) throw CsvParseError(source, lineno, "duplicate column '" + name + "'");
        by_index[k] = static_cast<int>(c);
      }
      if (by_index.empty()) throw CsvParseError(source, lineno, "header has no coord_* columns");
      for (std::size_t k = 0; k < by_index.size(); ++k) {
        if (by_index[k] == -1) {
          throw CsvParseError(source, lineno, "missing column coord_" + std::to_string(k));
        }
      }
      coord_cols = by_index;
      continue;
    }
    if (fields.size() != width) {
      throw CsvParseError(source, lineno,
                          "expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()));
    }
    for (int c : coord_cols) {
      const std::string text = trim(fields[c]);
      double v = 0;
      const char* first = text.data();
      const char* last = text.data() + text.size();
      const auto res = std::from_chars(first, last, v);
      if (text.empty() || res.ec != std::errc{} || res.ptr != last || !std::isfinite(v)) {
        throw CsvParseError(source, lineno, "invalid number '" + text + "'");
      }
      values.push_back(v);
    }
  }
  if (!have_header) throw CsvParseError(source, lineno, "missing header row");
  const auto d = static_cast<Eigen::Index>(coord_cols.size());
  const auto n = static_cast<Eigen::Index>(values.size()) / d;
  if (n == 0) throw CsvParseError(source, lineno, "no data rows");
  Eigen::MatrixXd out(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < d; ++k) out(i, k) = values[i * d + k];
  return out;
}

Eigen::MatrixXd read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  return read_points_csv(in, path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
  if (!out) throw InvalidArgument("failed writing " + path.string());
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace sinkdrift::io
