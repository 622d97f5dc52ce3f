#include "workbench/analysis.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace workbench::analysis {

using Eigen::MatrixXd;
using Eigen::VectorXd;

PcaResult pca(const std::vector<MatrixXd>& matrices, std::size_t k) {
    if (matrices.empty()) throw ValidationError("PCA needs at least one matrix");
    const Eigen::Index n = matrices.front().cols();
    Eigen::Index rows = 0;
    for (const auto& m : matrices) {
        if (m.cols() != n) throw ValidationError("PCA input matrices disagree on column count");
        rows += m.rows();
    }
    if (k == 0 || static_cast<Eigen::Index>(k) > n) throw ValidationError("PCA k must be in 1..n");
    if (rows < static_cast<Eigen::Index>(k) + 1) throw ValidationError("PCA needs at least k + 1 rows");

    MatrixXd pooled(rows, n);
    Eigen::Index at = 0;
    for (const auto& m : matrices) {
        pooled.middleRows(at, m.rows()) = m;
        at += m.rows();
    }
    PcaResult r;
    r.mean = pooled.colwise().mean().transpose();
    const MatrixXd centred = pooled.rowwise() - r.mean.transpose();
    const MatrixXd cov = centred.transpose() * centred / static_cast<double>(rows - 1);

    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
    // Eigen sorts ascending; take the largest k.
    const VectorXd values = eig.eigenvalues().reverse().cwiseMax(0.0);
    const MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
    const double total = values.sum();

    const auto kk = static_cast<Eigen::Index>(k);
    r.components = vectors.leftCols(kk).transpose();
    for (Eigen::Index c = 0; c < kk; ++c) {
        Eigen::Index arg = 0;
        r.components.row(c).cwiseAbs().maxCoeff(&arg);
        if (r.components(c, arg) < 0.0) r.components.row(c) *= -1.0;
    }
    r.explained_variance = total > 0.0 ? VectorXd(values.head(kk) / total) : VectorXd(VectorXd::Zero(kk));

    for (const auto& m : matrices) r.projections.push_back((m.rowwise() - r.mean.transpose()) * r.components.transpose());
    return r;
}

std::vector<MatrixXd> reconstruct(const PcaResult& result) {
    std::vector<MatrixXd> out;
    for (const auto& p : result.projections) out.push_back((p * result.components).rowwise() + result.mean.transpose());
    return out;
}

double separation_score(const std::vector<MatrixXd>& projections) {
    if (projections.size() < 2) throw ValidationError("separation score needs at least two sequences");
    const Eigen::Index dims = std::min<Eigen::Index>(2, projections.front().cols());
    std::vector<MatrixXd> pts;
    for (const auto& p : projections) pts.push_back(p.leftCols(dims));

    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t a = 0; a < pts.size(); ++a) {
        for (Eigen::Index i = 0; i < pts[a].rows(); ++i) {
            ++count;
            if (pts[a].rows() < 2) continue;  // singleton: silhouette 0
            const Eigen::RowVectorXd x = pts[a].row(i);
            const double intra = (pts[a].rowwise() - x).rowwise().norm().sum() / static_cast<double>(pts[a].rows() - 1);
            double nearest = std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < pts.size(); ++b) {
                if (b == a || pts[b].rows() == 0) continue;
                nearest = std::min(nearest, (pts[b].rowwise() - x).rowwise().norm().mean());
            }
            const double denom = std::max(intra, nearest);
            if (denom > 0.0) sum += (nearest - intra) / denom;
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

RmseReport trajectory_rmse(const data::NormalizedSequence& generated, const data::NormalizedSequence& teacher,
                           const data::Layout& layout) {
    if (generated.vectors.size() != teacher.vectors.size()) {
        throw ValidationError("trajectory lengths differ: " + std::to_string(generated.vectors.size()) + " vs " +
                              std::to_string(teacher.vectors.size()));
    }
    const std::size_t d = layout.dim();
    double joints = 0.0, facial = 0.0, audio = 0.0;
    for (std::size_t t = 0; t < teacher.vectors.size(); ++t) {
        const auto& g = generated.vectors[t];
        const auto& r = teacher.vectors[t];
        if (g.size() != d || r.size() != d) throw ValidationError("trajectory dimension mismatch at step " + std::to_string(t));
        for (std::size_t i = 0; i < d; ++i) {
            const double e = (g[i] - r[i]) * (g[i] - r[i]);
            if (i < layout.facial_begin()) {
                joints += e;
            } else if (i < layout.audio_begin()) {
                facial += e;
            } else {
                audio += e;
            }
        }
    }
    const double steps = static_cast<double>(teacher.vectors.size());
    auto rms = [steps](double sq, std::size_t width) {
        return width && steps > 0 ? std::sqrt(sq / (steps * static_cast<double>(width))) : 0.0;
    };
    return {rms(joints, layout.joints), rms(facial, layout.facial), rms(audio, layout.audio),
            rms(joints + facial + audio, d)};
}

namespace {

std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << std::setprecision(17);
    return out;
}

}  // namespace

void write_projections_csv(const PcaResult& result, const std::vector<std::string>& names, const std::string& path) {
    auto out = open_csv(path);
    out << "sequence_id,t";
    for (Eigen::Index c = 0; c < result.components.rows(); ++c) out << ",pc" << c + 1;
    out << '\n';
    for (std::size_t s = 0; s < result.projections.size(); ++s) {
        const auto& p = result.projections[s];
        const std::string id = s < names.size() ? names[s] : std::to_string(s);
        for (Eigen::Index t = 0; t < p.rows(); ++t) {
            out << id << ',' << t;
            for (Eigen::Index c = 0; c < p.cols(); ++c) out << ',' << p(t, c);
            out << '\n';
        }
    }
}

void write_variance_csv(const PcaResult& result, const std::string& path) {
    auto out = open_csv(path);
    out << "component,explained_variance_ratio\n";
    for (Eigen::Index c = 0; c < result.explained_variance.size(); ++c) {
        out << "pc" << c + 1 << ',' << result.explained_variance(c) << '\n';
    }
}

void write_rmse_csv(const std::vector<std::string>& names, const std::vector<RmseReport>& reports,
                    const std::string& path) {
    auto out = open_csv(path);
    out << "sequence_id,joints,facial,audio,overall\n";
    for (std::size_t s = 0; s < reports.size(); ++s) {
        const auto& r = reports[s];
        out << (s < names.size() ? names[s] : std::to_string(s)) << ',' << r.joints << ',' << r.facial << ','
            << r.audio << ',' << r.overall << '\n';
    }
}

}  // namespace workbench::analysis
