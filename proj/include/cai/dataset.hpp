#pragma once

// Columnar analysis dataset: outcome vector, binary treatment vector and a
// dense covariate matrix with named columns. Loading performs listwise
// deletion of rows with missing or non-finite values and records what was
// dropped in a ValidationReport.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cai {

struct ColumnSummary {
    std::string name;
    double min = 0, max = 0, mean = 0;
    std::size_t missing = 0;
};

struct ValidationReport {
    std::size_t raw_rows = 0;
    std::size_t dropped_rows = 0;
    std::vector<std::string> drop_reasons;
    std::vector<std::string> warnings;
    std::vector<ColumnSummary> column_summaries;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Dataset {
public:
    std::vector<double> outcomes;
    std::vector<int> treatments;
    std::vector<std::vector<double>> covariates;  // row-major, one row per unit
    std::vector<std::string> covariate_names;
    ValidationReport report;

    std::size_t unit_count() const { return outcomes.size(); }
    std::size_t covariate_count() const { return covariate_names.size(); }

    void validate() const {
        if (treatments.size() != outcomes.size() || covariates.size() != outcomes.size())
            throw DataError("dataset columns disagree on unit count");
        for (double y : outcomes)
            if (!std::isfinite(y)) throw DataError("non-finite outcome");
        for (int d : treatments)
            if (d != 0 && d != 1) throw DataError("treatment value not in {0,1}");
        for (const auto& row : covariates) {
            if (row.size() != covariate_names.size())
                throw DataError("ragged covariate row");
            for (double x : row)
                if (!std::isfinite(x)) throw DataError("non-finite covariate");
        }
    }
};

struct CsvSchema {
    std::string outcome;
    std::string treatment;
    std::vector<std::string> covariates;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) {
        // trim whitespace and CR
        while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ' || cur.back() == '\t')) cur.pop_back();
        std::size_t b = 0;
        while (b < cur.size() && (cur[b] == ' ' || cur[b] == '\t')) ++b;
        out.push_back(cur.substr(b));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

// Returns false for missing ("", "NA", "NaN", "nan").
inline bool parse_cell(const std::string& s, double& v) {
    if (s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan") return false;
    char* end = nullptr;
    v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || end != s.c_str() + s.size()) return false;
    return std::isfinite(v);
}

}  // namespace detail

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file: " + path);
    const auto header = detail::split_csv_line(line);

    auto col_index = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("column not found in header: " + name);
        return static_cast<std::size_t>(it - header.begin());
    };

    const std::size_t yi = col_index(schema.outcome);
    const std::size_t di = col_index(schema.treatment);
    std::vector<std::size_t> ci;
    for (const auto& c : schema.covariates) ci.push_back(col_index(c));

    Dataset ds;
    ds.covariate_names = schema.covariates;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        ds.report.raw_rows++;
        const auto cells = detail::split_csv_line(line);
        double y, d;
        std::vector<double> row(ci.size());
        bool ok = cells.size() >= header.size() &&
                  detail::parse_cell(cells[yi], y) && detail::parse_cell(cells[di], d);
        if (ok) {
            for (std::size_t j = 0; j < ci.size(); ++j)
                if (!detail::parse_cell(cells[ci[j]], row[j])) { ok = false; break; }
        }
        if (!ok) {
            ds.report.dropped_rows++;
            ds.report.drop_reasons.push_back("line " + std::to_string(lineno) + ": missing or non-numeric value");
            continue;
        }
        if (d != 0.0 && d != 1.0)
            throw DataError("non-binary treatment value at line " + std::to_string(lineno));
        ds.outcomes.push_back(y);
        ds.treatments.push_back(static_cast<int>(d));
        ds.covariates.push_back(std::move(row));
    }
    if (ds.unit_count() == 0) throw DataError("no usable rows in " + path);

    for (std::size_t j = 0; j < ds.covariate_names.size(); ++j) {
        ColumnSummary cs;
        cs.name = ds.covariate_names[j];
        cs.min = cs.max = ds.covariates[0][j];
        double sum = 0;
        for (const auto& row : ds.covariates) {
            cs.min = std::min(cs.min, row[j]);
            cs.max = std::max(cs.max, row[j]);
            sum += row[j];
        }
        cs.mean = sum / static_cast<double>(ds.unit_count());
        ds.report.column_summaries.push_back(cs);
    }
    ds.validate();
    return ds;
}

inline void write_csv(const Dataset& ds, const std::string& path,
                      const std::string& outcome_name = "y",
                      const std::string& treatment_name = "d") {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out.precision(17);
    out << outcome_name << ',' << treatment_name;
    for (const auto& n : ds.covariate_names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < ds.unit_count(); ++i) {
        out << ds.outcomes[i] << ',' << ds.treatments[i];
        for (double x : ds.covariates[i]) out << ',' << x;
        out << '\n';
    }
}

// Replace a categorical column by k-1 reference-coded indicators (reference =
// first category in sorted order). A single-category column is dropped with a
// warning instead.
inline Dataset one_hot_expand(const Dataset& ds, const std::string& column) {
    auto it = std::find(ds.covariate_names.begin(), ds.covariate_names.end(), column);
    if (it == ds.covariate_names.end()) throw DataError("one_hot_expand: column not found: " + column);
    const std::size_t j = static_cast<std::size_t>(it - ds.covariate_names.begin());

    std::set<double> cats;
    for (const auto& row : ds.covariates) cats.insert(row[j]);

    Dataset out = ds;
    out.covariate_names.clear();
    for (auto& row : out.covariates) row.clear();

    for (std::size_t c = 0; c < ds.covariate_names.size(); ++c) {
        if (c == j) continue;
        out.covariate_names.push_back(ds.covariate_names[c]);
        for (std::size_t i = 0; i < ds.unit_count(); ++i)
            out.covariates[i].push_back(ds.covariates[i][c]);
    }
    if (cats.size() <= 1) {
        out.report.warnings.push_back("one_hot_expand: column '" + column + "' has a single category; dropped");
        return out;
    }
    std::vector<double> levels(cats.begin(), cats.end());
    for (std::size_t k = 1; k < levels.size(); ++k) {
        std::ostringstream name;
        name << column << "_" << levels[k];
        out.covariate_names.push_back(name.str());
        for (std::size_t i = 0; i < ds.unit_count(); ++i)
            out.covariates[i].push_back(ds.covariates[i][j] == levels[k] ? 1.0 : 0.0);
    }
    return out;
}

}  // namespace cai
