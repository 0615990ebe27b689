#include "toyvlm/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "toyvlm/errors.hpp"

namespace toyvlm {

std::size_t levenshtein(const std::string& a, const std::string& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] != b[j - 1]);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

namespace {

std::string fold(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    std::string out = s.substr(b, e - b + 1);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::string t = s;
    if (!t.empty() && t.back() == '%') t.pop_back();
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size()) return std::nullopt;
    return v;
}

}  // namespace

double anls(const std::string& prediction, const std::vector<std::string>& golds, double tau) {
    if (golds.empty()) throw InputError("anls: empty gold set");
    const std::string p = fold(prediction);
    double best = 0;
    for (const auto& gold : golds) {
        const std::string g = fold(gold);
        const std::size_t maxlen = std::max(p.size(), g.size());
        double nl;
        if (maxlen == 0) {
            nl = 0;  // both empty: identical
        } else {
            nl = static_cast<double>(levenshtein(p, g)) / static_cast<double>(maxlen);
        }
        const double score = nl < tau ? 1.0 - nl : 0.0;
        best = std::max(best, score);
    }
    return best;
}

bool relaxed_accuracy(const std::string& prediction, const std::string& gold, double tol) {
    const std::string p = fold(prediction);
    const std::string g = fold(gold);
    const auto pn = parse_number(p);
    const auto gn = parse_number(g);
    if (pn && gn) {
        if (*gn == 0.0) return *pn == 0.0;
        return std::abs(*pn - *gn) <= tol * std::abs(*gn);
    }
    return p == g;
}

double iou(const BBox& a, const BBox& b) {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    return uni > 0 ? inter / uni : 0.0;
}

std::optional<BBox> parse_prediction_box(const std::string& text, int width, int height) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        try {
            const auto parsed = parse_box_text(line);
            if (!parsed.empty()) {
                const NormBox nb = parsed.front().box;
                if (nb.x1 >= nb.x2 || nb.y1 >= nb.y2) continue;
                return denormalize_box(nb, width, height);
            }
        } catch (const ParseError&) {
            continue;  // unparseable line, try the next
        }
    }
    return std::nullopt;
}

const char* metric_name(MetricKind m) {
    switch (m) {
        case MetricKind::Anls: return "anls";
        case MetricKind::RelaxedAccuracy: return "relaxed_accuracy";
        case MetricKind::AccAtIou50: return "acc_at_iou50";
    }
    throw ConfigError("metric_name: bad enum value");
}

MetricKind metric_from_name(const std::string& name) {
    for (MetricKind m : {MetricKind::Anls, MetricKind::RelaxedAccuracy, MetricKind::AccAtIou50})
        if (name == metric_name(m)) return m;
    throw ConfigError("unknown metric '" + name + "'; valid: anls, relaxed_accuracy, acc_at_iou50");
}

EvalReport eval_dataset(const GenerateFn& generate, std::vector<TaskRecord> records, MetricKind metric,
                        const std::string& dataset_id) {
    EvalReport report;
    report.dataset_id = dataset_id;
    report.metric = metric_name(metric);
    for (auto& rec : records) {
        const std::string gold = rec.response;
        const std::string pred = generate(rec);
        double score = 0;
        if (metric == MetricKind::Anls) {
            score = anls(pred, {gold});
        } else if (metric == MetricKind::RelaxedAccuracy) {
            score = relaxed_accuracy(pred, gold) ? 1.0 : 0.0;
        } else {
            // gold boxes live in the 0..1000 frame of the record response;
            // compare in that frame directly
            const auto pb = parse_prediction_box(pred, 1000, 1000);
            const auto gb = parse_prediction_box(gold, 1000, 1000);
            if (!gb) throw ConfigError("eval_dataset: gold response has no parseable box");
            if (!pb) {
                ++report.failure_count;
                score = 0;
            } else {
                score = iou(*pb, *gb) >= 0.5 ? 1.0 : 0.0;
            }
        }
        report.per_sample.push_back(score);
    }
    report.sample_count = static_cast<int>(report.per_sample.size());
    double total = 0;
    for (double s : report.per_sample) total += s;
    report.aggregate = report.sample_count ? total / report.sample_count : 0.0;
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["dataset"] = report.dataset_id;
    j["metric"] = report.metric;
    j["aggregate"] = report.aggregate;
    j["sample_count"] = report.sample_count;
    j["failure_count"] = report.failure_count;
    j["per_sample"] = report.per_sample;
    // reserved but not implemented: external judge scoring
    j["unimplemented_metrics"] = nlohmann::json::array({"gpt4_score"});
    return j.dump(2);
}

std::string report_to_table(const EvalReport& report) {
    std::ostringstream os;
    os << "dataset          metric            samples  failures  aggregate\n";
    os << "---------------  ----------------  -------  --------  ---------\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-15s  %-16s  %7d  %8d  %9.4f\n", report.dataset_id.c_str(),
                  report.metric.c_str(), report.sample_count, report.failure_count, report.aggregate);
    os << buf;
    return os.str();
}

}  // namespace toyvlm
