#include <sstream>

#include "doctest.h"
#include "sinkdrift/io.hpp"
#include "sinkdrift/rng.hpp"
#include "tempdir.hpp"

using namespace sinkdrift;
using Eigen::MatrixXd;

TEST_SUITE("io") {

TEST_CASE("tau slugs") {
  CHECK(io::tau_slug(0.01) == "tau0p010");
  CHECK(io::tau_slug(0.1) == "tau0p100");
  CHECK(io::tau_slug(1.0) == "tau1p000");
  CHECK(io::tau_slug(10.0) == "tau10p000");
  CHECK_THROWS_AS(io::tau_slug(0.0), InvalidArgument);
}

TEST_CASE("format_double round trips") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
    CHECK(std::stod(io::format_double(v)) == v);
  }
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(2.0) == "2");
}

TEST_CASE("points csv round trips exactly") {
  Rng rng(2);
  const MatrixXd x = rng.normal_matrix(17, 3);
  std::stringstream ss;
  io::write_points_csv(ss, x);
  const std::string text = ss.str();
  CHECK(text.rfind("# coordinates are dimensionless\n", 0) == 0);
  CHECK(text.find("coord_0,coord_1,coord_2\n") != std::string::npos);
  CHECK(io::read_points_csv(ss) == x);
}

TEST_CASE("trajectory csv layout") {
  FlowTrajectory<double> traj;
  MatrixXd a(2, 2), b(2, 2);
  a << 0, 1, 2, 3;
  b << 0.5, 1.5, 2.5, 3.5;
  traj.snapshots = {{0, a}, {10, b}};
  std::stringstream ss;
  io::write_trajectory_csv(ss, traj, {});
  CHECK(ss.str() == "step,particle_id,coord_0,coord_1\n0,0,0,1\n0,1,2,3\n10,0,0.5,1.5\n10,1,2.5,3.5\n");
  // Extra numeric columns are ignored by the point reader.
  CHECK(io::read_points_csv(ss).rows() == 4);
}

TEST_CASE("train csv layout") {
  std::stringstream ss;
  io::write_train_csv(ss, {{100, 0.5, 1.25, 2.0}}, {"note"});
  CHECK(ss.str() == "# note\niteration,loss,w2sq,seconds\n100,0.5,1.25,2\n");
}

TEST_CASE("parse errors carry line numbers") {
  auto line_of = [](const std::string& text) -> long {
    std::istringstream is(text);
    try {
      io::read_points_csv(is, "mem");
    } catch (const io::CsvParseError& e) {
      CHECK(std::string(e.what()).rfind("mem:", 0) == 0);
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("# c\ncoord_0,coord_1\n1,2\n3,x\n") == 4);
  CHECK(line_of("coord_0,coord_1\n1,2\n3\n") == 3);
  CHECK(line_of("a,b\n1,2\n") == 1);
  CHECK(line_of("") == 0);
  CHECK(line_of("coord_0\n") == 1);
  CHECK(line_of("coord_0\nnan\n") == 2);
}

TEST_CASE("missing files are reported") {
  CHECK_THROWS_AS(io::read_points_csv(std::filesystem::path("/nonexistent/points.csv")), InvalidArgument);
}

TEST_CASE("write_text_file creates directories") {
  TempDir dir;
  const auto p = dir / "a/b/c.txt";
  io::write_text_file(p, "hello\n");
  CHECK(slurp(p) == "hello\n");
  CHECK(io::dump_json(nlohmann::json{{"k", 1}}) == "{\n  \"k\": 1\n}\n");
}

}  // TEST_SUITE
