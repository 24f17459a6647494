#include "drfn/train/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace drfn {

ConfusionMatrix::ConfusionMatrix(std::size_t k) : k_(k), counts_(k * k, 0) {}

void ConfusionMatrix::add(std::span<const int> truth, std::span<const int> pred, int ignore_label)
{
    if (truth.size() != pred.size()) throw std::invalid_argument("confusion matrix: truth/prediction size mismatch");
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == ignore_label) continue;
        if (truth[i] < 0 || pred[i] < 0 || static_cast<std::size_t>(truth[i]) >= k_ || static_cast<std::size_t>(pred[i]) >= k_)
            throw std::invalid_argument("confusion matrix: class index out of range");
        add(truth[i], pred[i]);
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other)
{
    if (other.k_ != k_) throw std::invalid_argument("confusion matrix: class count mismatch in merge");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const
{
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
}

std::uint64_t ConfusionMatrix::trace() const
{
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < k_; ++i) s += at(i, i);
    return s;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm)
{
    const std::size_t K = cm.num_classes();
    MetricsReport r;
    const auto total = cm.total();
    r.accuracy = total ? static_cast<double>(cm.trace()) / static_cast<double>(total) : 0.0;
    r.per_class.resize(K);
    std::size_t defined = 0;
    for (std::size_t c = 0; c < K; ++c) {
        std::uint64_t tp = cm.at(c, c), support = 0, predicted = 0;
        for (std::size_t o = 0; o < K; ++o) {
            support += cm.at(c, o);
            predicted += cm.at(o, c);
        }
        ClassMetrics& m = r.per_class[c];
        m.defined = support + predicted > 0;
        if (!m.defined) continue;
        m.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
        m.recall = support ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
        m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        r.precision += m.precision;
        r.recall += m.recall;
        r.f1 += m.f1;
        ++defined;
    }
    if (defined) {
        r.precision /= static_cast<double>(defined);
        r.recall /= static_cast<double>(defined);
        r.f1 /= static_cast<double>(defined);
    }
    return r;
}

void print_report_table(std::ostream& os, const std::vector<ReportRow>& rows)
{
    std::size_t width = 6;
    for (const auto& row : rows) width = std::max(width, row.label.size());
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-*s %6s %6s %6s %6s\n", static_cast<int>(width), "Method", "A", "P", "R", "F1");
    os << buf;
    for (const auto& row : rows) {
        const MetricsReport& m = row.report;
        std::snprintf(buf, sizeof buf, "%-*s %6.1f %6.1f %6.1f %6.1f\n", static_cast<int>(width), row.label.c_str(),
                      100.0 * m.accuracy, 100.0 * m.precision, 100.0 * m.recall, 100.0 * m.f1);
        os << buf;
    }
}

void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows, const std::vector<std::string>& class_names)
{
    os << "method,A,P,R,F1";
    for (const auto& n : class_names) os << ',' << n << "_P," << n << "_R," << n << "_F1";
    os << '\n';
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    for (const auto& row : rows) {
        const MetricsReport& m = row.report;
        os << row.label << ',' << num(m.accuracy) << ',' << num(m.precision) << ',' << num(m.recall) << ',' << num(m.f1);
        for (std::size_t c = 0; c < class_names.size() && c < m.per_class.size(); ++c) {
            const ClassMetrics& pc = m.per_class[c];
            if (pc.defined)
                os << ',' << num(pc.precision) << ',' << num(pc.recall) << ',' << num(pc.f1);
            else
                os << ",,,";
        }
        os << '\n';
    }
}

}  // namespace drfn
