#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "toyvlm/data.hpp"

namespace toyvlm {

// Levenshtein edit distance (insert/delete/substitute, unit costs).
std::size_t levenshtein(const std::string& a, const std::string& b);

// DocVQA-style ANLS over a gold set: per gold, 1 - NL if NL < tau else 0,
// on lowercased/trimmed strings; the best gold wins.
double anls(const std::string& prediction, const std::vector<std::string>& golds, double tau = 0.5);

// ChartQA-style relaxed accuracy: within-5% match for numeric answers
// (exact when gold is 0), case-insensitive trimmed equality otherwise.
// The tolerance boundary is inclusive.
bool relaxed_accuracy(const std::string& prediction, const std::string& gold, double tol = 0.05);

double iou(const BBox& a, const BBox& b);

// Extracts the first box matching the canonical `class: [x1, y1, x2, y2]`
// grammar and denormalizes from the 0..1000 frame; nullopt on failure
// (callers score such samples 0 rather than aborting).
std::optional<BBox> parse_prediction_box(const std::string& text, int width, int height);

enum class MetricKind { Anls, RelaxedAccuracy, AccAtIou50 };

const char* metric_name(MetricKind m);
MetricKind metric_from_name(const std::string& name);

struct EvalReport {
    std::string dataset_id;
    std::string metric;
    std::vector<double> per_sample;
    double aggregate = 0;
    int sample_count = 0;
    int failure_count = 0;  // unparseable predictions
};

// Runs a generator over a manifest's records and applies the metric.
// The generator maps a record (prompt + image) to model output text; an
// oracle generator that echoes golds must score 1.0 everywhere.
using GenerateFn = std::function<std::string(TaskRecord&)>;

EvalReport eval_dataset(const GenerateFn& generate, std::vector<TaskRecord> records, MetricKind metric,
                        const std::string& dataset_id);

std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

}  // namespace toyvlm
