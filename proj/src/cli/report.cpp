#include "kinlim/cli/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fftw3.h>
#include <openssl/crypto.h>
#include <openssl/evp.h>

#include <json.hpp>

namespace kinlim::cli {

namespace {

constexpr const char* kinlim_version = "0.1.0";

void write_file(const std::filesystem::path& p, std::string_view s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << s;
    if (!out) throw Error("write failed for " + p.string());
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string xml_escape(std::string_view s) {
    std::string o;
    for (char c : s) {
        switch (c) {
            case '&': o += "&amp;"; break;
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '"': o += "&quot;"; break;
            default: o += c;
        }
    }
    return o;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

double to_double(const std::string& s) {
    if (s == "nan" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
    try {
        return std::stod(s);
    } catch (...) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

// Tick positions covering [lo, hi] in plot coordinates.
std::vector<double> ticks(double lo, double hi, bool log) {
    std::vector<double> t;
    if (log) {
        for (double d = std::floor(lo); d <= std::ceil(hi) + 1e-9; d += 1.0)
            if (d >= lo - 1e-9 && d <= hi + 1e-9) t.push_back(d);
        if (t.size() >= 2) return t;
    }
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    for (double x = std::ceil(lo / step) * step; x <= hi + 1e-9 * step; x += step) t.push_back(x);
    return t;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
    std::string hex;
    char b[3];
    for (unsigned i = 0; i < len; ++i) {
        std::snprintf(b, sizeof b, "%02x", md[i]);
        hex += b;
    }
    return hex;
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string o = "\"";
    for (char c : s) {
        if (c == '"') o += '"';
        o += c;
    }
    return o + "\"";
}

std::string to_csv(const Table& t, const std::string& config_hash) {
    std::string o;
    for (const auto& c : t.columns) o += csv_field(c) + ",";
    o += "config_hash\r\n";
    for (const auto& r : t.rows) {
        for (const auto& c : r) o += csv_field(c) + ",";
        o += config_hash + "\r\n";
    }
    return o;
}

Table parse_csv(std::string_view text, const std::string& name) {
    std::vector<std::vector<std::string>> recs;
    std::vector<std::string> rec;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            if (!field.empty()) throw Error("csv " + name + ": quote inside an unquoted field");
            quoted = any = true;
        } else if (c == ',') {
            rec.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                rec.push_back(std::move(field));
                recs.push_back(std::move(rec));
            }
            field.clear();
            rec.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw Error("csv " + name + ": unterminated quoted field");
    if (any || !field.empty()) {
        rec.push_back(std::move(field));
        recs.push_back(std::move(rec));
    }
    if (recs.empty()) throw Error("csv " + name + ": no header");
    Table t{name, recs.front(), {}};
    for (std::size_t i = 1; i < recs.size(); ++i) {
        if (recs[i].size() != t.columns.size())
            throw Error("csv " + name + ": record " + std::to_string(i + 1) + " has the wrong width");
        t.rows.push_back(std::move(recs[i]));
    }
    return t;
}

Table read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path), path.stem().string()); }

std::string render_svg(const PlotSpec& plot, const std::vector<Table>& tables) {
    const double W = 720, H = 460, ml = 80, mr = 170, mt = 40, mb = 60;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
    struct Curve {
        std::string label;
        std::vector<std::pair<double, double>> pts;
        bool line_only;
    };
    std::vector<Curve> curves;
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& s : plot.series) {
        const auto it = std::find_if(tables.begin(), tables.end(), [&](const Table& t) { return t.name == s.table; });
        if (it == tables.end()) throw Error("plot " + plot.name + ": no table " + s.table);
        const int cx = it->column(s.x), cy = it->column(s.y);
        const int cf = s.filter.empty() ? -1 : it->column(s.filter);
        Curve c{s.label, {}, s.line_only};
        for (const auto& r : it->rows) {
            if (cf >= 0 && r[cf] != s.filter_value) continue;
            double x = to_double(r[cx]), y = to_double(r[cy]);
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if ((plot.logx && x <= 0) || (plot.logy && y <= 0)) continue;
            if (plot.logx) x = std::log10(x);
            if (plot.logy) y = std::log10(y);
            c.pts.emplace_back(x, y);
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
        curves.push_back(std::move(c));
    }
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(plot.title)
      << "</text>\n";
    if (x0 > x1) {
        o << "<text x=\"" << W / 2 << "\" y=\"" << H / 2 << "\" text-anchor=\"middle\">no data</text>\n</svg>\n";
        return o.str();
    }
    auto pad = [](double& a, double& b, bool log) {
        if (b - a < 1e-12 * std::max(1.0, std::abs(a))) {
            const double d = log ? 0.5 : std::max(std::abs(a) * 0.1, 1e-12);
            a -= d;
            b += d;
        } else {
            const double d = 0.04 * (b - a);
            a -= d;
            b += d;
        }
    };
    pad(x0, x1, plot.logx);
    pad(y0, y1, plot.logy);
    const double pw = W - ml - mr, ph = H - mt - mb;
    auto X = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
    auto Y = [&](double y) { return mt + ph - (y - y0) / (y1 - y0) * ph; };
    o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    auto label = [](double v, bool log) { return log ? "1e" + fmt("%g", v) : fmt("%g", v); };
    for (double t : ticks(x0, x1, plot.logx)) {
        o << "<line x1=\"" << X(t) << "\" y1=\"" << mt + ph << "\" x2=\"" << X(t) << "\" y2=\"" << mt + ph + 5
          << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << X(t) << "\" y=\"" << mt + ph + 18 << "\" text-anchor=\"middle\">"
          << label(t, plot.logx) << "</text>\n";
    }
    for (double t : ticks(y0, y1, plot.logy)) {
        o << "<line x1=\"" << ml - 5 << "\" y1=\"" << Y(t) << "\" x2=\"" << ml << "\" y2=\"" << Y(t)
          << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << ml - 8 << "\" y=\"" << Y(t) + 4 << "\" text-anchor=\"end\">" << label(t, plot.logy)
          << "</text>\n";
    }
    o << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << xml_escape(plot.xlabel)
      << "</text>\n";
    o << "<text x=\"18\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << mt + ph / 2 << ")\">" << xml_escape(plot.ylabel) << "</text>\n";
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const char* col = colors[i % 8];
        const auto& c = curves[i];
        if (c.pts.size() > 1) {
            o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
            for (const auto& [x, y] : c.pts) o << fmt("%.2f", X(x)) << "," << fmt("%.2f", Y(y)) << " ";
            o << "\"/>\n";
        }
        if (!c.line_only)
            for (const auto& [x, y] : c.pts)
                o << "<circle cx=\"" << fmt("%.2f", X(x)) << "\" cy=\"" << fmt("%.2f", Y(y)) << "\" r=\"3\" fill=\""
                  << col << "\"/>\n";
        const double ly = mt + 10 + 18 * i;
        o << "<line x1=\"" << W - mr + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - mr + 32 << "\" y2=\"" << ly
          << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << W - mr + 38 << "\" y=\"" << ly + 4 << "\">" << xml_escape(c.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

namespace {

nlohmann::json plot_json(const PlotSpec& p) {
    nlohmann::json j = {{"name", p.name},   {"title", p.title}, {"xlabel", p.xlabel},
                        {"ylabel", p.ylabel}, {"logx", p.logx},   {"logy", p.logy}};
    j["series"] = nlohmann::json::array();
    for (const auto& s : p.series)
        j["series"].push_back({{"table", s.table},
                               {"x", s.x},
                               {"y", s.y},
                               {"label", s.label},
                               {"filter", s.filter},
                               {"filter_value", s.filter_value},
                               {"line_only", s.line_only}});
    return j;
}

PlotSpec plot_from_json(const nlohmann::json& j) {
    PlotSpec p{j.at("name"), j.at("title"), j.at("xlabel"), j.at("ylabel"), j.at("logx"), j.at("logy"), {}};
    for (const auto& s : j.at("series"))
        p.series.push_back({s.at("table"), s.at("x"), s.at("y"), s.at("label"), s.at("filter"), s.at("filter_value"),
                            s.at("line_only")});
    return p;
}

std::string summary_text(const std::string& kind, const std::string& hash,
                         const std::vector<std::pair<std::string, std::string>>& summary,
                         const std::vector<PointStatus>& points) {
    std::string s = "experiment: " + kind + "\nconfig_hash: " + hash + "\n";
    for (const auto& [k, v] : summary) s += k + ": " + v + "\n";
    for (const auto& p : points)
        if (!p.ok) s += "FAILED point " + p.label + ": " + p.error + "\n";
    return s;
}

}  // namespace

std::string write_report(const ExperimentSpec& spec, const ExperimentReport& rep, const std::filesystem::path& out) {
    std::filesystem::create_directories(out);
    const std::string canon = canonical_config(spec);
    const std::string hash = sha256_hex(canon);
    nlohmann::json m;
    m["tool"] = "kinlim";
    m["experiment"] = rep.kind;
    m["config_hash"] = hash;
    m["seed"] = spec.seed;
    m["versions"] = {{"kinlim", kinlim_version},
                     {"compiler", std::string(__VERSION__)},
                     {"fftw", std::string(fftw_version)},
                     {"openssl", std::string(OpenSSL_version(OPENSSL_VERSION))}};
    m["parameters"] = nlohmann::json::array();
    for (const auto& [k, v] : config_entries(spec)) m["parameters"].push_back({k, v});
    m["config_file"] = "config.resolved.ini";
    m["tables"] = nlohmann::json::array();
    for (const auto& t : rep.tables) {
        write_file(out / (t.name + ".csv"), to_csv(t, hash));
        m["tables"].push_back(t.name + ".csv");
    }
    m["plots"] = nlohmann::json::array();
    for (const auto& p : rep.plots) {
        write_file(out / (p.name + ".svg"), render_svg(p, rep.tables));
        m["plots"].push_back(plot_json(p));
    }
    m["summary"] = nlohmann::json::array();
    for (const auto& [k, v] : rep.summary) m["summary"].push_back({k, v});
    m["points"] = nlohmann::json::array();
    for (const auto& p : rep.points) m["points"].push_back({{"label", p.label}, {"ok", p.ok}, {"error", p.error}});
    for (const auto& [name, text] : rep.texts) write_file(out / name, text);
    write_file(out / "config.resolved.ini", canon);
    write_file(out / "summary.txt", summary_text(rep.kind, hash, rep.summary, rep.points));
    write_file(out / "manifest.json", m.dump(2) + "\n");
    return hash;
}

std::string regenerate_report(const std::filesystem::path& dir) {
    const auto m = nlohmann::json::parse(read_file(dir / "manifest.json"));
    const std::string hash = m.at("config_hash");
    if (sha256_hex(read_file(dir / m.at("config_file").get<std::string>())) != hash)
        throw Error("report: config.resolved.ini does not match the manifest hash");
    std::vector<Table> tables;
    for (const auto& name : m.at("tables")) {
        Table t = read_csv(dir / name.get<std::string>());
        if (t.columns.empty() || t.columns.back() != "config_hash") throw Error("report: table without config_hash");
        for (const auto& r : t.rows)
            if (r.back() != hash) throw Error("report: row of " + t.name + " carries a foreign config hash");
        tables.push_back(std::move(t));
    }
    for (const auto& pj : m.at("plots")) {
        const auto p = plot_from_json(pj);
        write_file(dir / (p.name + ".svg"), render_svg(p, tables));
    }
    std::vector<std::pair<std::string, std::string>> summary;
    for (const auto& kv : m.at("summary")) summary.emplace_back(kv.at(0), kv.at(1));
    std::vector<PointStatus> points;
    for (const auto& p : m.at("points")) points.push_back({p.at("label"), p.at("ok"), p.at("error")});
    const std::string text = summary_text(m.at("experiment"), hash, summary, points);
    write_file(dir / "summary.txt", text);
    return text;
}

}  // namespace kinlim::cli
