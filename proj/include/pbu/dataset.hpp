#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace pbu {

struct LabeledExample {
    std::vector<double> x;
    int y = 0;
};

/// Labeled examples with per-class index views. Feature dimension and class
/// count are fixed at construction; add() validates each example against
/// them.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t dim, int num_classes);

    void add(std::vector<double> x, int y);

    std::size_t size() const { return examples_.size(); }
    bool empty() const { return examples_.empty(); }
    std::size_t dim() const { return dim_; }
    int num_classes() const { return num_classes_; }

    const LabeledExample& operator[](std::size_t i) const { return examples_[i]; }
    const std::vector<LabeledExample>& examples() const { return examples_; }

    /// Per-class lists of example indices; partitions {0..size()-1}.
    std::vector<std::vector<std::size_t>> class_index() const;

    /// (S_n, S_p): examples of class s and everything else.
    std::pair<Dataset, Dataset> split_by_class(int s) const;

    bool single_class() const;

private:
    std::size_t dim_ = 0;
    int num_classes_ = 0;
    std::vector<LabeledExample> examples_;
};

/// CSV with header "f0,...,f{d-1},label". Feature dimension is inferred from
/// the header; num_classes is max(label)+1. Errors carry the offending line
/// number.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& data, const std::string& path);

}  // namespace pbu
