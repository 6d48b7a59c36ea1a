#include "hallu_cli/svg.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "hallu/format.hpp"

namespace hallu::cli {

namespace {

constexpr double kWidth = 480, kHeight = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

constexpr std::array<const char*, 8> kColors{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                             "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string px(double v) { return fmt_double(v, 2); }
double x_of(double fraction) { return kLeft + fraction * kPlotW; }
double y_of(double fraction) { return kTop + (1.0 - fraction) * kPlotH; }

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

void axes(std::ostringstream& s, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << px(kWidth / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << escape(title)
      << "</text>\n";
    s << "<line x1=\"" << px(kLeft) << "\" y1=\"" << px(y_of(0)) << "\" x2=\"" << px(x_of(1)) << "\" y2=\""
      << px(y_of(0)) << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << px(kLeft) << "\" y1=\"" << px(y_of(0)) << "\" x2=\"" << px(kLeft) << "\" y2=\""
      << px(y_of(1)) << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double f = i / 5.0;
        s << "<text x=\"" << px(x_of(f)) << "\" y=\"" << px(y_of(0) + 15) << "\" text-anchor=\"middle\">"
          << fmt_double(f, 1) << "</text>\n";
        s << "<text x=\"" << px(kLeft - 6) << "\" y=\"" << px(y_of(f) + 4) << "\" text-anchor=\"end\">"
          << fmt_double(f, 1) << "</text>\n";
    }
    s << "<text x=\"" << px(kLeft + kPlotW / 2) << "\" y=\"" << px(kHeight - 12) << "\" text-anchor=\"middle\">"
      << escape(xlabel) << "</text>\n";
    s << "<text transform=\"translate(16," << px(kTop + kPlotH / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(ylabel) << "</text>\n";
}

}  // namespace

std::string roc_svg(const metrics::RocReport& roc, const std::string& title) {
    std::ostringstream s;
    axes(s, title + " (AUC " + fmt_double(roc.auc, 3) + ")", "False positive rate", "True positive rate");
    s << "<line x1=\"" << px(x_of(0)) << "\" y1=\"" << px(y_of(0)) << "\" x2=\"" << px(x_of(1)) << "\" y2=\""
      << px(y_of(1)) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    s << "<polyline fill=\"none\" stroke=\"" << kColors[0] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < roc.points.size(); ++i) {
        if (i) s << ' ';
        s << px(x_of(roc.points[i].fpr)) << ',' << px(y_of(roc.points[i].tpr));
    }
    s << "\"/>\n";
    const double yx = 1.0 - roc.specificity_at_youden, yy = roc.sensitivity_at_youden;
    s << "<circle cx=\"" << px(x_of(yx)) << "\" cy=\"" << px(y_of(yy)) << "\" r=\"4\" fill=\"" << kColors[3]
      << "\"/>\n";
    s << "<text x=\"" << px(x_of(yx) + 8) << "\" y=\"" << px(y_of(yy) + 14) << "\">Youden J "
      << fmt_double(roc.youden_j, 3) << " at " << fmt_double(roc.youden_threshold, 1) << "</text>\n";
    s << "</svg>\n";
    return s.str();
}

std::string calibration_svg(const std::map<std::string, metrics::EceReport>& reports) {
    std::ostringstream s;
    axes(s, "Confidence calibration", "Stated confidence", "Observed accuracy");
    s << "<line x1=\"" << px(x_of(0)) << "\" y1=\"" << px(y_of(0)) << "\" x2=\"" << px(x_of(1)) << "\" y2=\""
      << px(y_of(1)) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    const double n_models = static_cast<double>(std::max<std::size_t>(1, reports.size()));
    std::size_t mi = 0;
    for (const auto& [model, rep] : reports) {
        const char* color = kColors[mi % kColors.size()];
        for (const auto& bin : rep.bins) {
            if (bin.count == 0) continue;
            const double bw = (bin.hi - bin.lo) / n_models;
            const double x0 = bin.lo + bw * static_cast<double>(mi);
            s << "<rect x=\"" << px(x_of(x0)) << "\" y=\"" << px(y_of(bin.accuracy)) << "\" width=\""
              << px(bw * kPlotW * 0.9) << "\" height=\"" << px(bin.accuracy * kPlotH) << "\" fill=\"" << color
              << "\" fill-opacity=\"0.75\"/>\n";
        }
        s << "<rect x=\"" << px(kLeft + 8) << "\" y=\"" << px(kTop + 6 + 14 * static_cast<double>(mi))
          << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
        s << "<text x=\"" << px(kLeft + 22) << "\" y=\"" << px(kTop + 15 + 14 * static_cast<double>(mi)) << "\">"
          << escape(model) << " (ECE " << fmt_double(rep.ece, 3) << ")</text>\n";
        ++mi;
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace hallu::cli
