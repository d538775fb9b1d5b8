#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "panet/errors.hpp"
#include "panet/tensor/tensor.hpp"

namespace panet {

struct Metrics {
  double per_instance_acc = 0.0;
  // Mean recall over the classes that have at least one sample.
  double per_class_acc = 0.0;
  // confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

// Index of the largest entry; ties resolve to the lowest index.
inline std::uint32_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return static_cast<std::uint32_t>(best);
}

inline Metrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion) {
  Metrics m;
  std::size_t total = 0, correct = 0, classes = 0;
  double recall_sum = 0.0;
  for (std::size_t c = 0; c < confusion.size(); ++c) {
    std::size_t row = 0;
    for (std::size_t n : confusion[c]) row += n;
    total += row;
    correct += confusion[c][c];
    if (row > 0) {
      recall_sum += static_cast<double>(confusion[c][c]) / static_cast<double>(row);
      ++classes;
    }
  }
  m.per_instance_acc = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  m.per_class_acc = classes ? recall_sum / static_cast<double>(classes) : 0.0;
  m.confusion = std::move(confusion);
  return m;
}

inline Metrics metrics_from_predictions(std::span<const std::uint32_t> labels,
                                        std::span<const std::uint32_t> predictions,
                                        std::uint32_t num_classes) {
  if (labels.size() != predictions.size()) throw UsageError("metrics: label/prediction counts differ");
  std::vector<std::vector<std::size_t>> confusion(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes)
      throw UsageError("metrics: class index outside [0, K)");
    ++confusion[labels[i]][predictions[i]];
  }
  return metrics_from_confusion(std::move(confusion));
}

}  // namespace panet
