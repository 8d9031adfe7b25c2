#pragma once

// File interfaces: delimiter-separated rating ingestion with dichotomization,
// estimate/curve/sweep table writers (atomic temp-file-plus-rename), and the
// point-biserial validation check.

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ratercap/common.hpp"
#include "ratercap/data.hpp"

namespace ratercap {

struct DelimitedTable {
    char delimiter = ',';
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t c = 0; c < header.size(); ++c) {
            std::string h = header[c];
            std::transform(h.begin(), h.end(), h.begin(), ::tolower);
            std::string n = name;
            std::transform(n.begin(), n.end(), n.begin(), ::tolower);
            if (h == n) return static_cast<int>(c);
        }
        return -1;
    }
};

namespace detail_io {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == delim) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(trim(cur));
    return out;
}

}  // namespace detail_io

// Reads a delimiter-separated file with a header row. The delimiter is
// auto-detected between tab and comma unless forced ('\0' = detect).
inline DelimitedTable read_delimited(const std::string& path, char delimiter = '\0') {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open input file: " + path);
    DelimitedTable t;
    std::string line;
    if (!std::getline(in, line)) throw io_error("input file is empty: " + path);
    if (delimiter == '\0')
        t.delimiter = line.find('\t') != std::string::npos ? '\t' : ',';
    else
        t.delimiter = delimiter;
    t.header = detail_io::split(line, t.delimiter);
    while (std::getline(in, line)) {
        if (detail_io::trim(line).empty()) continue;
        t.rows.push_back(detail_io::split(line, t.delimiter));
    }
    return t;
}

// Ingests a rating file, dichotomizing scores at the threshold (score >= t
// maps to 1) and splitting into one dataset per group value. Without a group
// column everything lands under the key "all".
inline std::map<std::string, RatingDataset> ingest(const std::string& path, double threshold,
                                                   const std::string& group_by = "",
                                                   char delimiter = '\0') {
    DelimitedTable t = read_delimited(path, delimiter);
    int cs = t.column("student"), cr = t.column("rater"), ci = t.column("item"),
        cy = t.column("score");
    if (cs < 0 || cr < 0 || ci < 0 || cy < 0)
        throw invalid_input_error(
            "input file must have student|rater|item|score columns: " + path);
    int cg = -1;
    if (!group_by.empty()) {
        cg = t.column(group_by);
        if (cg < 0)
            throw invalid_input_error("group column '" + group_by + "' not found in " + path);
    }

    double min_score = 1e300, max_score = -1e300;
    std::map<std::string, std::vector<RatingRecord>> grouped;
    std::size_t row_no = 1;
    for (const auto& row : t.rows) {
        ++row_no;
        std::size_t needed = static_cast<std::size_t>(std::max({cs, cr, ci, cy, cg})) + 1;
        if (row.size() < needed)
            throw invalid_input_error("row " + std::to_string(row_no) + " in " + path +
                                      " has too few columns");
        const std::string& raw = row[cy];
        char* end = nullptr;
        double score = std::strtod(raw.c_str(), &end);
        if (raw.empty() || end == raw.c_str() || *end != '\0')
            throw invalid_input_error("non-numeric score '" + raw + "' at row " +
                                      std::to_string(row_no) + " in " + path);
        min_score = std::min(min_score, score);
        max_score = std::max(max_score, score);
        std::string group = cg >= 0 ? row[cg] : "all";
        if (group.empty())
            throw invalid_input_error("empty group value at row " + std::to_string(row_no) +
                                      " in " + path);
        int y = score >= threshold ? 1 : 0;
        grouped[group].emplace_back(row[cs], row[cr], row[ci], y, group);
    }
    if (grouped.empty()) throw invalid_input_error("no data rows in " + path);
    if (threshold < min_score || threshold > max_score)
        throw invalid_input_error("threshold " + std::to_string(threshold) +
                                  " lies outside the observed score range [" +
                                  std::to_string(min_score) + ", " + std::to_string(max_score) +
                                  "]");
    std::map<std::string, RatingDataset> out;
    for (auto& [group, records] : grouped) out.emplace(group, RatingDataset::from_records(records));
    return out;
}

// --------------------------------------------------------------------------
// Atomic writers
// --------------------------------------------------------------------------

// Writes content to a temp file in the target directory, then renames it onto
// the final path. An interrupted write never leaves a partial final file.
inline void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    fs::path tmp = target;
    tmp += ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp);
        if (!out) throw io_error("cannot open for writing: " + tmp.string());
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw io_error("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw io_error("cannot move " + tmp.string() + " to " + path + ": " + ec.message());
    }
}

inline std::string format_double(double v, int precision = 10) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

// --------------------------------------------------------------------------
// Estimate tables
// --------------------------------------------------------------------------

struct EstimateRow {
    std::string rater;
    std::size_t n_ratings = 0;
    std::size_t sum_score = 0;
    double rho = 1.0;
    double eta = 0.0;
    double kappa_bar = 0.0;
    double kappa_bar_se = 0.0;
    bool has_se = false;
};

struct EstimateTable {
    std::string group;
    std::vector<EstimateRow> rows;
    std::vector<std::pair<std::string, double>> items;  // item id -> delta
    double sigma = 1.0;
    double alpha = 0.0;
    double loglik = 0.0;
    bool converged = true;
};

// Fixed column order: rater, n_ratings, sum_score, rho, eta, kappa_bar,
// kappa_bar_se.
inline std::string render_estimates_csv(const EstimateTable& t) {
    std::ostringstream os;
    os << "rater,n_ratings,sum_score,rho,eta,kappa_bar,kappa_bar_se\n";
    for (const auto& r : t.rows) {
        os << r.rater << ',' << r.n_ratings << ',' << r.sum_score << ','
           << format_double(r.rho) << ',' << format_double(r.eta) << ','
           << format_double(r.kappa_bar) << ',' << (r.has_se ? format_double(r.kappa_bar_se) : "NA")
           << '\n';
    }
    return os.str();
}

inline std::string render_items_csv(const EstimateTable& t) {
    std::ostringstream os;
    os << "item,delta\n";
    for (const auto& [id, d] : t.items) os << id << ',' << format_double(d) << '\n';
    return os.str();
}

// Curve file rows: rater, theta, kappa (raters x grid size rows).
inline std::string render_curves_csv(
    const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& curves) {
    std::ostringstream os;
    os << "rater,theta,kappa\n";
    for (const auto& [rater, curve] : curves)
        for (const auto& [theta, kappa] : curve)
            os << rater << ',' << format_double(theta) << ',' << format_double(kappa) << '\n';
    return os.str();
}

// --------------------------------------------------------------------------
// Point-biserial validation
// --------------------------------------------------------------------------

struct PointBiserial {
    std::string rater;
    std::string item;
    double correlation = 0.0;
    std::size_t n = 0;
    bool defined = false;
};

// Pearson correlation between each rater's binary ratings on each item and
// the ability estimates of the students they rated. Constant rating vectors
// leave the correlation undefined (reported as missing).
inline std::vector<PointBiserial> point_biserial_validation(const RatingDataset& data,
                                                            const std::vector<double>& theta_hat) {
    if (theta_hat.size() != data.n_students())
        throw invalid_input_error("point_biserial: theta vector does not match dataset");
    std::vector<PointBiserial> out;
    for (std::size_t r = 0; r < data.n_raters(); ++r) {
        for (std::size_t i = 0; i < data.n_items(); ++i) {
            std::vector<double> y, th;
            for (const Obs& o : data.observations()) {
                if (static_cast<std::size_t>(o.rater) == r &&
                    static_cast<std::size_t>(o.item) == i) {
                    y.push_back(o.y);
                    th.push_back(theta_hat[o.student]);
                }
            }
            if (y.empty()) continue;
            PointBiserial pb;
            pb.rater = data.rater_ids()[r];
            pb.item = data.item_ids()[i];
            pb.n = y.size();
            double my = mean(y), mt = mean(th);
            double num = 0.0, dy = 0.0, dt = 0.0;
            for (std::size_t k = 0; k < y.size(); ++k) {
                num += (y[k] - my) * (th[k] - mt);
                dy += sqr(y[k] - my);
                dt += sqr(th[k] - mt);
            }
            if (dy > 0.0 && dt > 0.0) {
                pb.correlation = num / std::sqrt(dy * dt);
                pb.defined = true;
            }
            out.push_back(pb);
        }
    }
    return out;
}

inline std::string render_point_biserial_csv(const std::vector<PointBiserial>& rows) {
    std::ostringstream os;
    os << "rater,item,correlation,n\n";
    for (const auto& pb : rows) {
        os << pb.rater << ',' << pb.item << ','
           << (pb.defined ? format_double(pb.correlation) : "NA") << ',' << pb.n << '\n';
    }
    return os.str();
}

}  // namespace ratercap
