#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "kinlim/cli/experiments.hpp"

namespace kinlim::cli {

std::string sha256_hex(std::string_view data);

// RFC 4180: fields holding a comma, quote, CR or LF are quoted and inner
// quotes doubled; records end with CRLF.
std::string csv_field(std::string_view s);
// Every row gets a trailing config_hash column.
std::string to_csv(const Table& t, const std::string& config_hash);
Table parse_csv(std::string_view text, const std::string& name);
Table read_csv(const std::filesystem::path& path);

// Self-contained SVG; axes on a log scale drop nonpositive samples.
std::string render_svg(const PlotSpec& plot, const std::vector<Table>& tables);

// Writes <out>/<table>.csv, <out>/<plot>.svg, summary.txt, the texts, the
// resolved config and manifest.json. Returns the config hash.
std::string write_report(const ExperimentSpec& spec, const ExperimentReport& rep, const std::filesystem::path& out);

// Re-reads a directory written by write_report, re-renders its plots from the
// CSV tables and returns the summary text.
std::string regenerate_report(const std::filesystem::path& dir);

}  // namespace kinlim::cli
