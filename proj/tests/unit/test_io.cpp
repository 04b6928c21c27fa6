#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dysarar/errors.hpp"
#include "dysarar/io.hpp"
#include "dysarar/simulation_lab.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace dysarar;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InvalidArgument;
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "dysarar_test_io";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("panel parsing: 3x2 with labels and dates") {
    const auto p = io::parse_panel("date,A,B\n2020-01-01,1,2\n2020-01-02,3.5,-4\n2020-01-03,5e-1,6\n", "mem");
    CHECK(p.labels == std::vector<std::string>{"A", "B"});
    CHECK(p.dates == std::vector<std::string>{"2020-01-01", "2020-01-02", "2020-01-03"});
    REQUIRE(p.values.rows() == 3);
    REQUIRE(p.values.cols() == 2);
    CHECK(p.values(1, 0) == 3.5);
    CHECK(p.values(1, 1) == -4.0);
    CHECK(p.values(2, 0) == 0.5);
}

TEST_CASE("panel parsing: log differences drop the first date") {
    const auto p = io::parse_panel("d,A,B\nx,100,50\ny,110,25\nz,121,50\n", "mem", true);
    REQUIRE(p.values.rows() == 2);
    CHECK(p.dates == std::vector<std::string>{"y", "z"});
    CHECK(p.values(0, 0) == doctest::Approx(std::log(1.1)).epsilon(1e-14));
    CHECK(p.values(1, 0) == doctest::Approx(std::log(1.1)).epsilon(1e-14));
    CHECK(p.values(0, 1) == doctest::Approx(-std::log(2.0)).epsilon(1e-14));
    CHECK(p.values(1, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("panel parsing errors") {
    CHECK(kind_of([] { (void)io::parse_panel("d,A,B\nx,1,2\ny,3\n", "mem"); }) == ErrorKind::RaggedRows);
    CHECK(kind_of([] { (void)io::parse_panel("d,A,B\nx,1,abc\n", "mem"); }) == ErrorKind::NonNumericCell);
    CHECK(kind_of([] { (void)io::parse_panel("d,A,B\nx,1,nan\n", "mem"); }) == ErrorKind::NonNumericCell);
    CHECK(kind_of([] { (void)io::parse_panel("d,A,B\n", "mem"); }) == ErrorKind::EmptyPanel);
    CHECK(kind_of([] { (void)io::parse_panel("d,A\nx,1\ny,-1\n", "mem", true); }) == ErrorKind::NonNumericCell);
    CHECK(kind_of([] { (void)io::ingest_panel("/nonexistent/dir/y.csv"); }) == ErrorKind::MissingInput);
}

TEST_CASE("csv round trip is exact to 1e-15") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(17, 5);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = g(rng) * std::pow(10.0, static_cast<int>(i % 9) - 4);
    const fs::path path = scratch("roundtrip.csv");
    std::vector<std::string> dates;
    for (int t = 0; t < 17; ++t) dates.push_back("d" + std::to_string(t));
    io::atomic_write(path, io::to_csv({"a", "b", "c", "d", "e"}, m, dates, "date"));
    const auto back = io::ingest_panel(path);
    CHECK(back.dates == dates);
    CHECK((back.values - m).cwiseAbs().maxCoeff() <= 1e-15 * m.cwiseAbs().maxCoeff());
    // 17 significant digits: actually bit-exact
    CHECK(back.values == m);

    io::atomic_write(scratch("m.csv"), io::matrix_csv(m));
    CHECK(io::read_matrix(scratch("m.csv")) == m);
}

TEST_CASE("format_double and number_json handle non-finite values") {
    CHECK(io::format_double(0.1) == "0.10000000000000001");
    CHECK(io::format_double(std::nan("")) == "nan");
    CHECK(io::format_double(INFINITY) == "inf");
    CHECK(io::format_double(-INFINITY) == "-inf");
    CHECK(io::number_json(std::nan("")) == "nan");
    CHECK(io::number_json(2.5) == 2.5);
}

TEST_CASE("sha256 known vectors") {
    CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    io::atomic_write(scratch("abc.txt"), "abc");
    CHECK(io::file_sha256(scratch("abc.txt")) == io::sha256_hex("abc"));
}

TEST_CASE("atomic_write creates directories and replaces content") {
    const fs::path p = scratch("nested/deeper/file.txt");
    fs::remove_all(p.parent_path());
    io::atomic_write(p, "one");
    io::atomic_write(p, "two");
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "two");
    int files = 0;
    for (const auto& e : fs::directory_iterator(p.parent_path())) files += e.is_regular_file() ? 1 : 0;
    CHECK(files == 1);  // no temp left behind
}

TEST_CASE("coefficient json round trip and shape checks") {
    const CoefficientVector c = FiniteSampleConfig::table2().truth;
    const nlohmann::json j = nlohmann::json::parse(io::to_json(c).dump());
    const CoefficientVector back = io::coefficients_from_json(j, Layout{6, 0});
    CHECK(back.kappa == c.kappa);
    CHECK(back.f == c.f);
    CHECK(back.r == c.r);
    CHECK(kind_of([&] { (void)io::coefficients_from_json(j, Layout{5, 0}); }) == ErrorKind::ConfigParse);
    CHECK(kind_of([] { (void)io::coefficients_from_json(nlohmann::json::array(), Layout{1, 0}); }) ==
          ErrorKind::ConfigParse);
}
