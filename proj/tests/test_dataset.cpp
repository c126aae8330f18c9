#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "cai/dataset.hpp"

using namespace cai;

namespace {

std::string write_temp(const std::string& contents) {
    static int counter = 0;
    std::string path = "test_dataset_tmp_" + std::to_string(counter++) + ".csv";
    std::ofstream f(path);
    f << contents;
    return path;
}

}  // namespace

TEST_CASE("load_csv keeps clean rows and maps columns by name") {
    const auto path = write_temp("w,d,y\n1.5,1,10\n2.5,0,20\n-1,1,30\n");
    CsvSchema s{"y", "d", {"w"}};
    const Dataset ds = load_csv(path, s);
    CHECK(ds.unit_count() == 3);
    CHECK(ds.outcomes == std::vector<double>{10, 20, 30});
    CHECK(ds.treatments == std::vector<int>{1, 0, 1});
    CHECK(ds.covariates[2][0] == -1);
    CHECK(ds.report.dropped_rows == 0);
    std::remove(path.c_str());
}

TEST_CASE("missing values are dropped listwise with reasons") {
    const auto path = write_temp("w,d,y\n1,1,10\nNA,0,20\n3,1,\n4,0,40\n");
    const Dataset ds = load_csv(path, CsvSchema{"y", "d", {"w"}});
    CHECK(ds.unit_count() == 2);
    CHECK(ds.report.raw_rows == 4);
    CHECK(ds.report.dropped_rows == 2);
    CHECK(ds.report.drop_reasons.size() == 2);
    std::remove(path.c_str());
}

TEST_CASE("non-binary treatment is an error") {
    const auto path = write_temp("w,d,y\n1,2,10\n");
    CHECK_THROWS_AS(load_csv(path, CsvSchema{"y", "d", {"w"}}), DataError);
    std::remove(path.c_str());
}

TEST_CASE("unknown column is an error") {
    const auto path = write_temp("w,d,y\n1,1,10\n");
    CHECK_THROWS_AS(load_csv(path, CsvSchema{"y", "d", {"nope"}}), DataError);
    std::remove(path.c_str());
}

TEST_CASE("column summaries cover min, max and mean") {
    const auto path = write_temp("w,d,y\n1,1,10\n3,0,20\n");
    const Dataset ds = load_csv(path, CsvSchema{"y", "d", {"w"}});
    REQUIRE(ds.report.column_summaries.size() == 1);
    CHECK(ds.report.column_summaries[0].min == 1);
    CHECK(ds.report.column_summaries[0].max == 3);
    CHECK(ds.report.column_summaries[0].mean == 2);
    std::remove(path.c_str());
}

TEST_CASE("write_csv round-trips exactly") {
    Dataset ds;
    ds.covariate_names = {"a", "b"};
    ds.outcomes = {0.1, 2.0 / 3.0};
    ds.treatments = {1, 0};
    ds.covariates = {{1.25, -0.000001}, {3e17, 0.5}};
    const std::string path = "test_dataset_roundtrip.csv";
    write_csv(ds, path);
    const Dataset back = load_csv(path, CsvSchema{"y", "d", {"a", "b"}});
    CHECK(back.outcomes == ds.outcomes);
    CHECK(back.treatments == ds.treatments);
    CHECK(back.covariates == ds.covariates);
    std::remove(path.c_str());
}

TEST_CASE("one_hot_expand reference-codes k-1 indicators") {
    Dataset ds;
    ds.covariate_names = {"x", "grp"};
    ds.outcomes = {1, 2, 3};
    ds.treatments = {0, 1, 0};
    ds.covariates = {{0.5, 2}, {1.5, 1}, {2.5, 3}};
    const Dataset out = one_hot_expand(ds, "grp");
    REQUIRE(out.covariate_names == std::vector<std::string>{"x", "grp_2", "grp_3"});
    CHECK(out.covariates[0] == std::vector<double>{0.5, 1, 0});
    CHECK(out.covariates[1] == std::vector<double>{1.5, 0, 0});  // level 1 is the reference
    CHECK(out.covariates[2] == std::vector<double>{2.5, 0, 1});
}

TEST_CASE("one_hot_expand drops a single-category column with a warning") {
    Dataset ds;
    ds.covariate_names = {"grp"};
    ds.outcomes = {1, 2};
    ds.treatments = {0, 1};
    ds.covariates = {{7}, {7}};
    const Dataset out = one_hot_expand(ds, "grp");
    CHECK(out.covariate_names.empty());
    CHECK(out.report.warnings.size() == 1);
}

TEST_CASE("validate rejects inconsistent datasets") {
    Dataset ds;
    ds.outcomes = {1.0};
    ds.treatments = {1, 0};
    ds.covariates = {{1.0}};
    ds.covariate_names = {"w"};
    CHECK_THROWS_AS(ds.validate(), DataError);
}
