#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kinlim/cli/config.hpp"

namespace kinlim::cli {

// Shortest round-trip decimal form; CSV cells use it so reruns are bitwise equal.
std::string num(double x);

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    void add(std::vector<std::string> row);
    int column(const std::string& c) const;
};

// One curve: column y against column x of a table, optionally restricted to
// rows whose `filter` column equals `filter_value`.
struct PlotSeries {
    std::string table, x, y, label;
    std::string filter = {}, filter_value = {};
    bool line_only = false;
};

struct PlotSpec {
    std::string name, title, xlabel, ylabel;
    bool logx = false, logy = false;
    std::vector<PlotSeries> series;
};

// Least-squares line with a 95% Student-t interval on the slope.
struct LineFit {
    int n = 0;
    double slope = 0.0, intercept = 0.0;
    double slope_se = 0.0, ci_low = 0.0, ci_high = 0.0;
    double r2 = 0.0;
};
LineFit linear_fit(std::span<const double> x, std::span<const double> y);
// Fit of log y against log x.
LineFit loglog_fit(std::span<const double> x, std::span<const double> y);

struct PointStatus {
    std::string label;
    bool ok = true;
    std::string error;
};

struct ExperimentReport {
    std::string kind;
    std::vector<Table> tables;
    std::vector<PlotSpec> plots;
    std::vector<std::pair<std::string, std::string>> summary;
    std::vector<PointStatus> points;
    // Free-form text written next to the tables (stability report, logs).
    std::vector<std::pair<std::string, std::string>> texts;
};

// Runs every sweep point (failures are recorded per point) and assembles
// tables, plot descriptions and a summary. Output files of individual runs
// (snapshots) go below spec.out_dir when it is set.
ExperimentReport run_experiment(const ExperimentSpec& spec, int threads = 1);

// Calls job(i) for i in [0, n) on at most `threads` workers. Exceptions are
// rethrown after all workers stop.
void parallel_for(int n, int threads, const std::function<void(int)>& job);

// sqrt(int_0^T ||(E_a - E_b, B_a - B_b)||_{H^n}^2 dt) by the trapezoid rule over
// the recorded histories, which must share their time stamps. Missing
// components count as zero.
double field_error(const RunResult& a, const RunResult& b, double L, int hn = 0);
// Same norm for two scalar histories sampled at the times t.
double history_error(std::span<const double> t, const std::vector<Field>& a, const std::vector<Field>& b, double L,
                     int hn = 0);

// First time at which the series crosses `level` upward, interpolated
// linearly in log(series); NaN if it never does.
double crossing_time(std::span<const double> t, std::span<const double> u, double level);

}  // namespace kinlim::cli
