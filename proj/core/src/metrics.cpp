#include "cpr/metrics.hpp"

#include <cmath>
#include <limits>

#include "edt.hpp"

namespace cpr {
namespace {

void check_pair(const LabelMask& a, const LabelMask& b, std::size_t c, const char* what) {
  if (a.tensor().shape() != b.tensor().shape()) {
    throw ShapeError(std::string(what) + ": mask shapes differ (" + to_string(a.tensor().shape()) + " vs " +
                     to_string(b.tensor().shape()) + ")");
  }
  if (c >= a.channels()) throw ShapeError(std::string(what) + ": class " + std::to_string(c) + " out of range");
}

}  // namespace

double dice(const LabelMask& a, const LabelMask& b, std::size_t c) {
  check_pair(a, b, c, "dice");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t v = 0; v < a.pixels(); ++v) {
    const bool in_a = a.value(v, c) == 1.0f, in_b = b.value(v, c) == 1.0f;
    na += in_a;
    nb += in_b;
    both += in_a && in_b;
  }
  if (na + nb == 0) return 100.0;
  return 100.0 * 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<std::size_t> boundary_pixels(const LabelMask& mask, std::size_t c) {
  const std::size_t h = mask.height(), w = mask.width();
  auto fg = [&](std::size_t y, std::size_t x) { return mask(y, x, c) == 1.0f; };
  std::vector<std::size_t> out;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!fg(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w || !fg(y - 1, x) || !fg(y + 1, x) ||
                        !fg(y, x - 1) || !fg(y, x + 1);
      if (edge) out.push_back(y * w + x);
    }
  }
  return out;
}

double asd(const LabelMask& a, const LabelMask& b, std::size_t c) {
  check_pair(a, b, c, "asd");
  const auto ba = boundary_pixels(a, c);
  const auto bb = boundary_pixels(b, c);
  if (ba.empty() || bb.empty()) {
    throw DegenerateError("asd: undefined for class " + std::to_string(c) + " because a mask is empty");
  }
  const std::size_t h = a.height(), w = a.width();
  auto directed_sum = [&](const std::vector<std::size_t>& from, const std::vector<std::size_t>& to) {
    std::vector<char> sites(h * w, 0);
    for (std::size_t p : to) sites[p] = 1;
    const std::vector<double> dist = detail::squared_edt(sites, h, w);
    double sum = 0.0;
    for (std::size_t p : from) sum += std::sqrt(dist[p]);
    return sum;
  };
  const double total = directed_sum(ba, bb) + directed_sum(bb, ba);
  return total / static_cast<double>(ba.size() + bb.size());
}

std::vector<std::string> default_class_names(std::size_t channels) {
  if (channels == 2) return {"cup", "disc"};
  std::vector<std::string> names;
  for (std::size_t c = 0; c < channels; ++c) names.push_back("class" + std::to_string(c));
  return names;
}

MetricReport evaluate(const LabelMask& pred, const LabelMask& truth, const std::vector<std::string>& names) {
  if (names.size() != pred.channels()) throw ShapeError("evaluate: class name count does not match channels");
  MetricReport report;
  for (std::size_t c = 0; c < pred.channels(); ++c) {
    ClassMetrics m{names[c], dice(pred, truth, c), std::nullopt};
    try {
      m.asd = asd(pred, truth, c);
    } catch (const DegenerateError&) {
    }
    report.classes.push_back(std::move(m));
  }
  std::vector<MetricReport> one{report};
  return average_reports(one);
}

MetricReport average_reports(std::span<const MetricReport> reports) {
  if (reports.empty()) throw DegenerateError("average: no reports");
  MetricReport out;
  const std::size_t classes = reports.front().classes.size();
  double dice_total = 0.0, asd_total = 0.0;
  std::size_t asd_classes = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    ClassMetrics m{reports.front().classes[c].name, 0.0, std::nullopt};
    double asd_sum = 0.0;
    std::size_t asd_n = 0;
    for (const MetricReport& r : reports) {
      if (r.classes.size() != classes) throw ShapeError("average: reports disagree on class count");
      m.dice += r.classes[c].dice;
      if (r.classes[c].asd) {
        asd_sum += *r.classes[c].asd;
        ++asd_n;
      }
    }
    m.dice /= static_cast<double>(reports.size());
    if (asd_n) m.asd = asd_sum / static_cast<double>(asd_n);
    dice_total += m.dice;
    if (m.asd) {
      asd_total += *m.asd;
      ++asd_classes;
    }
    out.classes.push_back(std::move(m));
  }
  out.avg_dice = classes ? dice_total / static_cast<double>(classes) : 0.0;
  if (asd_classes == classes && classes > 0) out.avg_asd = asd_total / static_cast<double>(classes);
  return out;
}

nlohmann::json MetricReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j = nlohmann::json::object();
  for (const ClassMetrics& m : classes) j[m.name] = {{"dice", m.dice}, {"asd", opt(m.asd)}};
  j["avg"] = {{"dice", avg_dice}, {"asd", opt(avg_asd)}};
  return j;
}

LabelMask threshold_map(const ProbMap& prob, double threshold) {
  LabelMask out(prob.height(), prob.width(), prob.channels());
  for (std::size_t i = 0; i < prob.tensor().size(); ++i) {
    out.value(i / prob.channels(), i % prob.channels()) = prob.tensor()[i] >= threshold ? 1.0f : 0.0f;
  }
  return out;
}

}  // namespace cpr
