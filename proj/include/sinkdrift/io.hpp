#pragma once

// CSV and JSON output in the formats the plotting scripts read, plus the
// point-cloud CSV parser used by `eval`.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sinkdrift/error.hpp"
#include "sinkdrift/flow.hpp"
#include "sinkdrift/nnet.hpp"

namespace sinkdrift::io {

class CsvParseError : public InvalidArgument {
 public:
  CsvParseError(const std::string& source, long line, const std::string& what)
      : InvalidArgument(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Fixed three-decimal slug, e.g. 0.01 -> "tau0p010", 10 -> "tau10p000".
std::string tau_slug(double tau);

/// Comment lines written above every CSV header.
std::vector<std::string> standard_comments();

/// Columns coord_0..coord_{d-1}, one row per point.
void write_points_csv(std::ostream& os, const Eigen::MatrixXd& points,
                      const std::vector<std::string>& comments = standard_comments());

/// Columns step, particle_id, coord_0..coord_{d-1}; one row per particle per snapshot.
void write_trajectory_csv(std::ostream& os, const FlowTrajectory<double>& traj,
                          const std::vector<std::string>& comments = standard_comments());

/// Columns iteration, loss, w2sq, seconds.
void write_train_csv(std::ostream& os, const std::vector<nn::TrainRecord>& records,
                     const std::vector<std::string>& comments = standard_comments());

/// Reads the coord_* columns of a CSV. Lines starting with '#' are skipped;
/// the first other line is the header. Other numeric columns are ignored.
Eigen::MatrixXd read_points_csv(std::istream& is, const std::string& source = "<input>");
Eigen::MatrixXd read_points_csv(const std::filesystem::path& path);

/// Writes text to a file, creating parent directories. Throws InvalidArgument
/// when the file cannot be opened.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Pretty-printed JSON with a trailing newline.
std::string dump_json(const nlohmann::json& j);

}  // namespace sinkdrift::io
