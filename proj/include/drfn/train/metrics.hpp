#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace drfn {

// K x K pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t num_classes = 4);

    std::size_t num_classes() const { return k_; }
    void add(int truth, int pred) { ++counts_[static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(pred)]; }
    // Pixels whose truth equals ignore_label are skipped.
    void add(std::span<const int> truth, std::span<const int> pred, int ignore_label = -1);
    void merge(const ConfusionMatrix& other);

    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * k_ + pred]; }
    std::uint64_t total() const;
    std::uint64_t trace() const;

private:
    std::size_t k_;
    std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // false when the class has neither ground-truth nor predicted pixels
    bool defined = false;
};

struct MetricsReport {
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Macro averages run over the defined classes.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

struct ReportRow {
    std::string label;
    MetricsReport report;
};

// "Method  A  P  R  F1" table with values x100 at one decimal.
void print_report_table(std::ostream& os, const std::vector<ReportRow>& rows);
void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows, const std::vector<std::string>& class_names);

}  // namespace drfn
