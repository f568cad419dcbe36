#pragma once
// Dense per-(fold, method, metric, sample) score storage with UNDEFINED
// holes, the input to the metric sanity checks.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace xuq::sanity {

class MetricScoreTable {
  public:
    MetricScoreTable() = default;
    MetricScoreTable(std::vector<int> folds, std::vector<std::string> methods,
                     std::vector<std::string> metrics, std::vector<std::int64_t> samples)
        : folds_(std::move(folds)),
          methods_(std::move(methods)),
          metrics_(std::move(metrics)),
          samples_(std::move(samples)),
          cells_(folds_.size() * methods_.size() * metrics_.size() * samples_.size()) {
        for (std::size_t i = 0; i < folds_.size(); ++i) fold_index_[folds_[i]] = i;
        for (std::size_t i = 0; i < methods_.size(); ++i) method_index_[methods_[i]] = i;
        for (std::size_t i = 0; i < metrics_.size(); ++i) metric_index_[metrics_[i]] = i;
        for (std::size_t i = 0; i < samples_.size(); ++i) sample_index_[samples_[i]] = i;
    }

    const std::vector<int>& folds() const noexcept { return folds_; }
    const std::vector<std::string>& methods() const noexcept { return methods_; }
    const std::vector<std::string>& metrics() const noexcept { return metrics_; }
    const std::vector<std::int64_t>& samples() const noexcept { return samples_; }

    void set(int fold, const std::string& method, const std::string& metric, std::int64_t sample,
             std::optional<double> value) {
        cells_[flat(fold, method, metric, sample)] = value;
    }

    std::optional<double> get(int fold, const std::string& method, const std::string& metric,
                              std::int64_t sample) const {
        return cells_[flat(fold, method, metric, sample)];
    }

    std::optional<double> at(std::size_t fold_i, std::size_t method_i, std::size_t metric_i,
                             std::size_t sample_i) const {
        return cells_[((fold_i * methods_.size() + method_i) * metrics_.size() + metric_i) *
                          samples_.size() +
                      sample_i];
    }

    std::size_t metric_idx(const std::string& metric) const { return lookup(metric_index_, metric, "metric"); }

  private:
    std::size_t flat(int fold, const std::string& method, const std::string& metric,
                     std::int64_t sample) const {
        const std::size_t f = lookup(fold_index_, fold, "fold");
        const std::size_t m = lookup(method_index_, method, "method");
        const std::size_t k = lookup(metric_index_, metric, "metric");
        const std::size_t s = lookup(sample_index_, sample, "sample");
        return ((f * methods_.size() + m) * metrics_.size() + k) * samples_.size() + s;
    }

    template <typename Map, typename Key>
    static std::size_t lookup(const Map& map, const Key& key, const char* what) {
        const auto it = map.find(key);
        if (it == map.end()) throw std::invalid_argument(std::string("MetricScoreTable: unknown ") + what);
        return it->second;
    }

    std::vector<int> folds_;
    std::vector<std::string> methods_;
    std::vector<std::string> metrics_;
    std::vector<std::int64_t> samples_;
    std::vector<std::optional<double>> cells_;
    std::map<int, std::size_t> fold_index_;
    std::map<std::string, std::size_t> method_index_;
    std::map<std::string, std::size_t> metric_index_;
    std::map<std::int64_t, std::size_t> sample_index_;
};

}  // namespace xuq::sanity
