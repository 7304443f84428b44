#include "feedcap/kernel.hpp"

#include <cmath>
#include <sstream>

namespace feedcap {

ConditionalKernel::ConditionalKernel(std::vector<std::size_t> cond_sizes,
                                     std::size_t target_size, std::vector<SimplexVector> rows)
    : cond_sizes_(std::move(cond_sizes)), target_size_(target_size), rows_(std::move(rows)) {
    if (target_size_ == 0) throw ValidationError("kernel target alphabet is empty");
    std::size_t expect = 1;
    for (std::size_t d : cond_sizes_) {
        if (d == 0) throw ValidationError("kernel conditioning dimension is empty");
        expect *= d;
    }
    if (rows_.size() != expect)
        throw ValidationError("kernel has " + std::to_string(rows_.size()) + " rows, expected " +
                              std::to_string(expect));
    for (std::size_t i = 0; i < rows_.size(); ++i)
        if (rows_[i].size() != target_size_)
            throw ValidationError("kernel row " + std::to_string(i) + " has width " +
                                  std::to_string(rows_[i].size()) + ", expected " +
                                  std::to_string(target_size_));
}

std::size_t ConditionalKernel::flat_index(const std::vector<std::size_t>& coords) const {
    if (coords.size() != cond_sizes_.size())
        throw ValidationError("kernel index arity mismatch");
    std::size_t flat = 0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        if (coords[i] >= cond_sizes_[i]) throw ValidationError("kernel index out of range");
        flat = flat * cond_sizes_[i] + coords[i];
    }
    return flat;
}

std::vector<std::size_t> ConditionalKernel::unflatten(std::size_t flat) const {
    std::vector<std::size_t> coords(cond_sizes_.size(), 0);
    for (std::size_t i = cond_sizes_.size(); i-- > 0;) {
        coords[i] = flat % cond_sizes_[i];
        flat /= cond_sizes_[i];
    }
    return coords;
}

namespace {

std::string describe_row(std::size_t row, const std::vector<std::size_t>& cond_sizes,
                         const std::vector<std::string>& cond_labels) {
    if (cond_sizes.empty()) return "row " + std::to_string(row);
    std::vector<std::size_t> coords(cond_sizes.size(), 0);
    std::size_t flat = row;
    for (std::size_t i = cond_sizes.size(); i-- > 0;) {
        coords[i] = flat % cond_sizes[i];
        flat /= cond_sizes[i];
    }
    std::ostringstream os;
    os << "row " << row << " (";
    for (std::size_t i = 0; i < coords.size(); ++i) {
        if (i) os << ",";
        if (i < cond_labels.size() && !cond_labels[i].empty()) os << cond_labels[i] << "=";
        os << coords[i];
    }
    os << ")";
    return os.str();
}

} // namespace

ValidationReport validate_kernel(const std::vector<std::vector<double>>& rows,
                                 std::size_t target_size,
                                 const std::vector<std::size_t>& cond_sizes,
                                 const std::vector<std::string>& cond_labels) {
    ValidationReport report;
    if (!cond_sizes.empty()) {
        std::size_t expect = 1;
        for (std::size_t d : cond_sizes) expect *= d;
        if (rows.size() != expect) {
            report.ok = false;
            report.defects.push_back({0, "expected " + std::to_string(expect) + " rows, got " +
                                             std::to_string(rows.size())});
            return report;
        }
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const std::string where = describe_row(i, cond_sizes, cond_labels);
        if (r.size() != target_size) {
            report.defects.push_back({i, where + ": width " + std::to_string(r.size()) +
                                             ", expected " + std::to_string(target_size)});
            continue;
        }
        double sum = 0.0;
        bool bad_entry = false;
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (std::isnan(r[j]) || r[j] < 0.0) {
                report.defects.push_back({i, where + ": entry " + std::to_string(j) +
                                                 " is negative or NaN"});
                bad_entry = true;
                break;
            }
            sum += r[j];
        }
        if (bad_entry) continue;
        if (std::abs(sum - 1.0) > kRowSumTol) {
            std::ostringstream os;
            os << where << ": mass " << sum << " deviates from 1 by " << std::abs(sum - 1.0);
            report.defects.push_back({i, os.str()});
        }
    }
    report.ok = report.defects.empty();
    return report;
}

JointDecomposition bayes_decompose(const ConditionalKernel& joint, std::size_t x_size,
                                   std::size_t y_size) {
    if (joint.target_size() != x_size * y_size)
        throw ValidationError("joint kernel target is not the declared product alphabet");
    JointDecomposition out;
    std::vector<SimplexVector> marg_rows;
    std::vector<SimplexVector> cond_rows;
    marg_rows.reserve(joint.row_count());
    cond_rows.reserve(joint.row_count() * y_size);
    for (std::size_t v = 0; v < joint.row_count(); ++v) {
        const SimplexVector& row = joint.row(v);
        std::vector<double> my(y_size, 0.0);
        for (std::size_t x = 0; x < x_size; ++x)
            for (std::size_t y = 0; y < y_size; ++y) my[y] += row[x * y_size + y];
        for (std::size_t y = 0; y < y_size; ++y) {
            std::vector<double> cx(x_size, 0.0);
            if (my[y] > 0.0) {
                for (std::size_t x = 0; x < x_size; ++x) cx[x] = row[x * y_size + y] / my[y];
                cond_rows.push_back(SimplexVector::renormalized(std::move(cx)));
            } else {
                out.uniform_filled.push_back(v * y_size + y);
                cond_rows.push_back(SimplexVector::uniform(x_size));
            }
        }
        marg_rows.push_back(SimplexVector::renormalized(std::move(my)));
    }
    std::vector<std::size_t> cond_dims = joint.cond_sizes();
    std::vector<std::size_t> cx_dims = cond_dims;
    cx_dims.push_back(y_size);
    out.marginal_y = ConditionalKernel(cond_dims, y_size, std::move(marg_rows));
    out.conditional_x = ConditionalKernel(cx_dims, x_size, std::move(cond_rows));
    return out;
}

ConditionalKernel compose(const ConditionalKernel& k1, const ConditionalKernel& k2) {
    // k1: V -> X, k2: (V, X) -> Y; expects k2's last conditioning dim = |X|
    const std::size_t x_size = k1.target_size();
    const std::size_t y_size = k2.target_size();
    if (k2.cond_sizes().empty() || k2.cond_sizes().back() != x_size)
        throw ValidationError("compose: second kernel must condition on (V, X)");
    std::size_t v_count = 1;
    for (std::size_t i = 0; i + 1 < k2.cond_sizes().size(); ++i) v_count *= k2.cond_sizes()[i];
    if (k1.row_count() != v_count)
        throw ValidationError("compose: conditioning spaces do not match");
    std::vector<SimplexVector> rows;
    rows.reserve(v_count);
    for (std::size_t v = 0; v < v_count; ++v) {
        std::vector<double> joint(x_size * y_size, 0.0);
        for (std::size_t x = 0; x < x_size; ++x) {
            const double px = k1.row(v)[x];
            if (px == 0.0) {
                continue; // zero branch carries no mass regardless of k2
            }
            const SimplexVector& ry = k2.row(v * x_size + x);
            for (std::size_t y = 0; y < y_size; ++y) joint[x * y_size + y] = px * ry[y];
        }
        rows.push_back(SimplexVector::renormalized(std::move(joint)));
    }
    return ConditionalKernel(k1.cond_sizes(), x_size * y_size, std::move(rows));
}

} // namespace feedcap
