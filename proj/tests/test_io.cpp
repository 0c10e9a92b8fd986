#include <doctest.h>

#include <cstdio>

#include "tmap/blackbox.hpp"
#include "tmap/csv.hpp"

using namespace tmap;

TEST_CASE("csv round trip with manifest") {
  CsvTable t;
  t.manifest = {{"seed", "42"}, {"step", "3"}, {"model", "em31"}};
  t.columns = {"theta", "y"};
  t.data.resize(3, 2);
  t.data << 1.0, 2.5, -0.125, 1e-17, 3.14159265358979, 630.0;
  const std::string path = "/tmp/tmap_test_table.csv";
  write_csv(path, t);
  auto r = read_csv(path);
  CHECK(r.manifest == t.manifest);
  CHECK(r.columns == t.columns);
  CHECK(r.data.rows() == 3);
  CHECK((r.data - t.data).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_csv("/tmp/missing_tmap_table.csv"),
                  std::runtime_error);
}

TEST_CASE("black-box model over the line protocol") {
  // external "model": echoes theta back as y (y = theta, noise ignored)
  BlackBoxModel bb("while read t th rest; do echo $th; done", 1, 1, 1, 0);
  VectorXd th(1), xi(1);
  th[0] = 0.625; // dyadic value survives the text round trip exactly
  xi[0] = 99.0;
  CHECK(bb.evaluate(th, xi, VectorXd(), 1)[0] == 0.625);
  th[0] = -2.25;
  CHECK(bb.evaluate(th, xi, VectorXd(), 2)[0] == -2.25);

  SUBCASE("wraps as a ForwardModel with call counting") {
    auto m = bb.as_forward_model();
    ModelCallCounter::instance().reset();
    th[0] = 1.5;
    CHECK(m(th, xi, VectorXd(), 3)[0] == 1.5);
    CHECK(ModelCallCounter::instance().value() == 1);
  }
}

TEST_CASE("black-box short response is an error") {
  BlackBoxModel bb("while read t th rest; do echo; done", 1, 1, 1, 0);
  VectorXd th = VectorXd::Zero(1), xi = VectorXd::Zero(1);
  CHECK_THROWS_AS(bb.evaluate(th, xi, VectorXd(), 1), std::runtime_error);
}
