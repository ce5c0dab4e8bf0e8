#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <memory>
#include <string>

#include "fpcirc/field_calculus.hpp"

namespace fpcirc {

/// Confining potential V. Either the separable quadratic a x^2 + b y^2 or a
/// tabulated field with a supplied gradient (evaluated off-grid by bilinear
/// interpolation).
class Potential {
public:
    enum class Kind { Quadratic, Tabulated };

    static Potential quadratic(double a, double b) {
        if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("quadratic potential needs a > 0 and b > 0");
        Potential p;
        p.kind_ = Kind::Quadratic;
        p.a_ = a;
        p.b_ = b;
        return p;
    }

    /// Tabulated potential; the gradient must agree with the stencil gradient of
    /// the values to 1e-6 relative (max norm).
    static Potential tabulated(ScalarField values, VectorField grad) {
        require_same_grid(values.grid, grad.grid(), "Potential::tabulated");
        const VectorField stencil = gradient(values);
        const double scale = max_abs(grad);
        const double mismatch = std::max(max_abs(ScalarField(values.grid, stencil.x.values - grad.x.values)),
                                         max_abs(ScalarField(values.grid, stencil.y.values - grad.y.values)));
        if (mismatch > 1e-6 * scale) {
            throw ConfigError("tabulated potential: supplied gradient disagrees with stencil gradient (" +
                              std::to_string(mismatch) + " > 1e-6 * " + std::to_string(scale) + ")");
        }
        Potential p;
        p.kind_ = Kind::Tabulated;
        p.table_ = std::make_shared<Table>(Table{std::move(values), std::move(grad)});
        return p;
    }

    Kind kind() const noexcept { return kind_; }
    double a() const noexcept { return a_; }
    double b() const noexcept { return b_; }

    double value(double x, double y) const {
        if (kind_ == Kind::Quadratic) return a_ * x * x + b_ * y * y;
        return interpolate(table_->values, x, y);
    }

    Vec2 gradient_at(double x, double y) const {
        if (kind_ == Kind::Quadratic) return {2.0 * a_ * x, 2.0 * b_ * y};
        return {interpolate(table_->grad.x, x, y), interpolate(table_->grad.y, x, y)};
    }

    ScalarField on_grid(const Grid2D& g) const {
        if (kind_ == Kind::Tabulated) {
            require_same_grid(g, table_->values.grid, "Potential::on_grid");
            return table_->values;
        }
        return tabulate(g, [this](double x, double y) { return value(x, y); });
    }

    VectorField gradient_on_grid(const Grid2D& g) const {
        if (kind_ == Kind::Tabulated) {
            require_same_grid(g, table_->grad.grid(), "Potential::gradient_on_grid");
            return table_->grad;
        }
        return tabulate(g, [this](double x, double y) { return gradient_at(x, y); });
    }

    nlohmann::json descriptor() const {
        if (kind_ == Kind::Quadratic) return {{"kind", "quadratic"}, {"a", a_}, {"b", b_}};
        return {{"kind", "tabulated"}, {"nx", table_->values.grid.nx}, {"ny", table_->values.grid.ny}};
    }

private:
    struct Table {
        ScalarField values;
        VectorField grad;
    };

    Kind kind_ = Kind::Quadratic;
    double a_ = 1.0;
    double b_ = 1.0;
    std::shared_ptr<const Table> table_;
};

/// rho_s(x) = exp(-(V(x) - shift) / D) / Z with shift = min over nodes of V and
/// Z fixed by the trapezoid rule on the grid. Usable off-grid (the particle
/// drift and the reference shape functions need it at arbitrary points).
struct StationaryDensity {
    Potential potential;
    double D = 1.0;
    double shift = 0.0;
    double Z = 1.0;

    double operator()(double x, double y) const {
        return std::max(std::exp(-(potential.value(x, y) - shift) / D) / Z, 1e-300);
    }
    /// grad rho_s = -rho_s grad V / D
    Vec2 gradient_at(double x, double y) const { return -(*this)(x, y) / D * potential.gradient_at(x, y); }
};

inline StationaryDensity make_stationary_density(const Potential& V, double D, const QuadratureWeights& w) {
    if (!(D > 0.0)) throw ConfigError("diffusion constant must be positive");
    const ScalarField v = V.on_grid(w.grid);
    const double shift = v.values.minCoeff();
    const Eigen::VectorXd unnormalised = (-(v.values.array() - shift) / D).exp();
    return StationaryDensity{V, D, shift, unnormalised.dot(w.w)};
}

/// Node values of the stationary density, normalised so that integrate(rho_s) = 1.
inline ScalarField stationary_density(const Potential& V, double D, const QuadratureWeights& w) {
    const StationaryDensity sd = make_stationary_density(V, D, w);
    const ScalarField v = V.on_grid(w.grid);
    ScalarField rho(w.grid, (-(v.values.array() - sd.shift) / D).exp().matrix());
    rho.values /= rho.values.dot(w.w);
    rho.values = rho.values.cwiseMax(1e-300);
    return rho;
}

}  // namespace fpcirc
