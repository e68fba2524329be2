#include "pbu/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pbu/errors.hpp"

namespace pbu {

Dataset::Dataset(std::size_t dim, int num_classes) : dim_(dim), num_classes_(num_classes) {
    if (dim < 1) throw ContractError("dataset: feature dimension must be >= 1");
    if (num_classes < 2) throw ContractError("dataset: need at least 2 classes");
}

void Dataset::add(std::vector<double> x, int y) {
    if (x.size() != dim_) {
        std::ostringstream os;
        os << "dataset: example has " << x.size() << " features, expected " << dim_;
        throw ShapeError(os.str());
    }
    if (y < 0 || y >= num_classes_) {
        std::ostringstream os;
        os << "dataset: label " << y << " outside {0.." << num_classes_ - 1 << "}";
        throw ContractError(os.str());
    }
    for (double v : x)
        if (!std::isfinite(v)) throw ContractError("dataset: non-finite feature value");
    examples_.push_back({std::move(x), y});
}

std::vector<std::vector<std::size_t>> Dataset::class_index() const {
    std::vector<std::vector<std::size_t>> idx(static_cast<std::size_t>(num_classes_));
    for (std::size_t i = 0; i < examples_.size(); ++i)
        idx[static_cast<std::size_t>(examples_[i].y)].push_back(i);
    return idx;
}

std::pair<Dataset, Dataset> Dataset::split_by_class(int s) const {
    if (s < 0 || s >= num_classes_) throw ContractError("split_by_class: class out of range");
    Dataset sn(dim_, num_classes_);
    Dataset sp(dim_, num_classes_);
    for (const LabeledExample& e : examples_) {
        if (e.y == s)
            sn.add(e.x, e.y);
        else
            sp.add(e.x, e.y);
    }
    return {std::move(sn), std::move(sp)};
}

bool Dataset::single_class() const {
    if (examples_.empty()) return true;
    const int y0 = examples_[0].y;
    for (const LabeledExample& e : examples_)
        if (e.y != y0) return false;
    return true;
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& what) {
    std::ostringstream os;
    os << path << ":" << line << ": " << what;
    throw ParseError(os.str());
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) parse_fail(path, 1, "missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const std::vector<std::string> header = split_commas(line);
    if (header.size() < 2 || header.back() != "label")
        parse_fail(path, 1, "expected header \"f0,...,f{d-1},label\"");
    const std::size_t d = header.size() - 1;
    for (std::size_t i = 0; i < d; ++i)
        if (header[i] != "f" + std::to_string(i))
            parse_fail(path, 1, "expected feature column \"f" + std::to_string(i) + "\", got \"" +
                                    header[i] + "\"");

    std::vector<LabeledExample> rows;
    int max_label = -1;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_commas(line);
        if (cells.size() != d + 1)
            parse_fail(path, lineno,
                       "got " + std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(d + 1));
        LabeledExample e;
        e.x.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            std::size_t pos = 0;
            try {
                e.x[i] = std::stod(cells[i], &pos);
            } catch (const std::exception&) {
                parse_fail(path, lineno, "non-numeric cell \"" + cells[i] + "\"");
            }
            if (pos != cells[i].size()) parse_fail(path, lineno, "trailing junk in cell \"" + cells[i] + "\"");
        }
        std::size_t pos = 0;
        try {
            e.y = std::stoi(cells[d], &pos);
        } catch (const std::exception&) {
            parse_fail(path, lineno, "non-integer label \"" + cells[d] + "\"");
        }
        if (pos != cells[d].size() || e.y < 0)
            parse_fail(path, lineno, "bad label \"" + cells[d] + "\"");
        max_label = std::max(max_label, e.y);
        rows.push_back(std::move(e));
    }
    if (rows.empty()) parse_fail(path, lineno + 1, "no data rows");
    if (max_label < 1) parse_fail(path, lineno, "need at least 2 distinct classes");

    Dataset data(d, max_label + 1);
    for (LabeledExample& e : rows) data.add(std::move(e.x), e.y);
    return data;
}

void save_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t i = 0; i < data.dim(); ++i) out << "f" << i << ",";
    out << "label\n";
    char buf[40];
    for (const LabeledExample& e : data.examples()) {
        for (double v : e.x) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << buf << ",";
        }
        out << e.y << "\n";
    }
    if (!out.good()) throw IoError("write failed for " + path);
}

}  // namespace pbu
