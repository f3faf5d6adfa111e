#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace nsvi {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

/**
 * Uniform staggered (MAC) grid on the rectangle [0, lx] x [0, ly].
 *
 * Unknown layout:
 *  - u on vertical faces (i, j), x = i h, i = 0..nx, j = 0..ny-1
 *  - v on horizontal faces (i, j), y = j h, i = 0..nx-1, j = 0..ny-1
 *  - scalars at cell centres ((i+1/2) h, (j+1/2) h)
 *  - stream function at nodes (i h, j h)
 *
 * Boundary faces carry the homogeneous Dirichlet trace and are not stored;
 * a field's degrees of freedom are the interior faces only, u block first.
 */
class MacGrid {
public:
    MacGrid(int nx, int ny, double lx = 1.0, double ly = 1.0);

    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    double lx() const noexcept { return lx_; }
    double ly() const noexcept { return ly_; }
    double h() const noexcept { return h_; }
    double cell_area() const noexcept { return h_ * h_; }

    int num_cells() const noexcept { return nx_ * ny_; }
    int num_u() const noexcept { return (nx_ - 1) * ny_; }
    int num_v() const noexcept { return nx_ * (ny_ - 1); }
    int num_faces() const noexcept { return num_u() + num_v(); }
    /// Interior nodes; the dimension of the discrete solenoidal space.
    int num_psi() const noexcept { return (nx_ - 1) * (ny_ - 1); }

    /// Interior-face dof index, or -1 for boundary faces.
    int u_index(int i, int j) const noexcept {
        return (i >= 1 && i <= nx_ - 1 && j >= 0 && j < ny_) ? j * (nx_ - 1) + (i - 1) : -1;
    }
    int v_index(int i, int j) const noexcept {
        return (i >= 0 && i < nx_ && j >= 1 && j <= ny_ - 1) ? num_u() + (j - 1) * nx_ + i : -1;
    }
    int cell_index(int i, int j) const noexcept { return j * nx_ + i; }
    int psi_index(int i, int j) const noexcept {
        return (i >= 1 && i <= nx_ - 1 && j >= 1 && j <= ny_ - 1) ? (j - 1) * (nx_ - 1) + (i - 1) : -1;
    }

    double cell_x(int i) const noexcept { return (i + 0.5) * h_; }
    double cell_y(int j) const noexcept { return (j + 0.5) * h_; }

    bool operator==(const MacGrid& o) const noexcept {
        return nx_ == o.nx_ && ny_ == o.ny_ && lx_ == o.lx_ && ly_ == o.ly_;
    }

private:
    int nx_;
    int ny_;
    double lx_;
    double ly_;
    double h_;
};

/// Cell selection describing a subdomain Omega'.
class Subdomain {
public:
    Subdomain(const MacGrid& grid, std::vector<std::uint8_t> mask);

    /// Cells whose centres lie in [x0, x1] x [y0, y1].
    static Subdomain box(const MacGrid& grid, double x0, double x1, double y0, double y1);

    const MacGrid& grid() const noexcept { return grid_; }
    bool contains(int i, int j) const noexcept {
        return i >= 0 && j >= 0 && i < grid_.nx() && j < grid_.ny() && mask_[grid_.cell_index(i, j)] != 0;
    }
    int count() const noexcept;
    const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }

private:
    MacGrid grid_;
    std::vector<std::uint8_t> mask_;
};

class VectorField {
public:
    explicit VectorField(const MacGrid& grid);
    VectorField(const MacGrid& grid, Eigen::VectorXd dofs);

    const MacGrid& grid() const noexcept { return grid_; }
    const Eigen::VectorXd& dofs() const noexcept { return dofs_; }
    Eigen::VectorXd& dofs() noexcept { return dofs_; }

    /// Face values; boundary faces read as zero.
    double u(int i, int j) const noexcept {
        const int k = grid_.u_index(i, j);
        return k < 0 ? 0.0 : dofs_[k];
    }
    double v(int i, int j) const noexcept {
        const int k = grid_.v_index(i, j);
        return k < 0 ? 0.0 : dofs_[k];
    }

    VectorField& operator+=(const VectorField& o);
    VectorField& operator-=(const VectorField& o);
    VectorField& operator*=(double s);

    friend VectorField operator+(VectorField a, const VectorField& b) { return a += b; }
    friend VectorField operator-(VectorField a, const VectorField& b) { return a -= b; }
    friend VectorField operator*(double s, VectorField a) { return a *= s; }
    friend VectorField operator*(VectorField a, double s) { return a *= s; }

private:
    MacGrid grid_;
    Eigen::VectorXd dofs_;
};

class ScalarField {
public:
    explicit ScalarField(const MacGrid& grid);
    ScalarField(const MacGrid& grid, Eigen::VectorXd values);

    const MacGrid& grid() const noexcept { return grid_; }
    const Eigen::VectorXd& values() const noexcept { return values_; }
    Eigen::VectorXd& values() noexcept { return values_; }
    double operator()(int i, int j) const noexcept { return values_[grid_.cell_index(i, j)]; }

private:
    MacGrid grid_;
    Eigen::VectorXd values_;
};

// ---------------------------------------------------------------------------
// Differential operators
// ---------------------------------------------------------------------------

ScalarField divergence(const VectorField& v);

/// Face gradient of a cell-centred scalar (interior faces only).
VectorField gradient(const ScalarField& phi);

/// Cell-centre velocity vectors: ((u_w + u_e)/2, (v_s + v_n)/2), interleaved x,y per cell.
Eigen::VectorXd reconstruct_cells(const VectorField& v);

/// Adjoint of reconstruct_cells with respect to the plain Euclidean products.
VectorField reconstruct_cells_adjoint(const MacGrid& grid, const Eigen::VectorXd& cell_vectors);

/// Velocity of a nodal stream function (psi = 0 on the boundary): u = d psi/dy, v = -d psi/dx.
VectorField curl(const MacGrid& grid, const Eigen::VectorXd& psi);

/// Adjoint of curl with respect to the plain Euclidean products.
Eigen::VectorXd curl_adjoint(const VectorField& v);

/// Leray projection: v - grad(phi) with phi solving the pressure Poisson equation.
/// Throws NumericalError if the Poisson solve does not converge.
VectorField leray_project(const VectorField& v);

/// Discrete Leray projection expressed in the stream-function basis: psi with curl(psi)
/// the L2-orthogonal projection of v onto the discrete solenoidal space.
Eigen::VectorXd solenoidal_coordinates(const VectorField& v);

/// Pressure Poisson solve: div grad phi = rhs (mean-zero part), mean(phi) = 0.
/// Returns phi; throws NumericalError if the residual target is not reached.
ScalarField solve_pressure_poisson(const ScalarField& rhs, double rel_tol = 1e-13, int max_iter = 20000);

// ---------------------------------------------------------------------------
// Convection
// ---------------------------------------------------------------------------

/// Centred advective term (a . grad) v sampled on the interior faces of v.
VectorField advect(const VectorField& a, const VectorField& v);

/// Skew-symmetric trilinear form b(a, v, w) = (b~(a, v, w) - b~(a, w, v)) / 2,
/// b~(a, v, w) = sum over faces h^2 [(a . grad) v] . w.
double convection_form(const VectorField& a, const VectorField& v, const VectorField& w);

// ---------------------------------------------------------------------------
// Norms and inner products
// ---------------------------------------------------------------------------

double inner_L2(const VectorField& a, const VectorField& b);
double norm_L2(const VectorField& v);
double inner_H1(const VectorField& a, const VectorField& b);
double seminorm_H1(const VectorField& v);
/// |v|_{1,4} = (sum_k int |grad v_k|^4)^(1/4), face-centred quadrature of |grad v_k|^2.
double norm_W14(const VectorField& v);
/// (int |v|^4)^(1/4) over cell-centre reconstructed vectors.
double norm_L4(const VectorField& v);
/// Max over cell-centre reconstructed speeds.
double norm_Linf(const VectorField& v);
/// Max over face components and cell-centre speeds; a lower estimate of sup |v|.
double sup_speed(const VectorField& v);

// ---------------------------------------------------------------------------
// Sparse assembly (weighted by the cell area, so x^T M y is the discrete integral)
// ---------------------------------------------------------------------------

/// Difference stencil for the H1 and W14 quadratures.
struct DifferenceStencil {
    SparseMatrix diff;     ///< gradient samples d = diff * dofs (units 1/h)
    SparseMatrix weights;  ///< all-face x difference incidence weights (1/2 or 1)
    int num_all_faces = 0;
};

DifferenceStencil build_difference_stencil(const MacGrid& grid);
/// Weighted stiffness K with dofs^T K dofs = |v|_{1,2}^2.
SparseMatrix build_stiffness(const MacGrid& grid);
/// Weighted centred advection: w^T A v = b~(a, v, w).
SparseMatrix build_advection(const VectorField& a);
/// Curl matrix (faces x interior nodes).
SparseMatrix build_curl(const MacGrid& grid);
/// Cell reconstruction matrix (2 * cells x faces).
SparseMatrix build_reconstruction(const MacGrid& grid);
/// Cell-centred div grad with natural (no-flux) walls, unweighted (units 1/h^2).
SparseMatrix build_pressure_laplacian(const MacGrid& grid);

// ---------------------------------------------------------------------------
// Dual norm and constants
// ---------------------------------------------------------------------------

struct DualNormResult {
    double value = 0.0;      ///< certified lower bound <f,z>/|z|_{1,4} of the attained iterate
    double increment = 0.0;  ///< relative increase of the last accepted ascent step
    int iterations = 0;
};

/**
 * Evaluates |f|_{-1,4/3} over Omega': the supremum of <f,z>/|z|_{1,4} over discrete
 * solenoidal z supported in Omega'. Setup (restricted basis, factorisation) is done
 * once; evaluate() may be called for many f on the same subdomain.
 */
class DualNormEvaluator {
public:
    explicit DualNormEvaluator(const Subdomain& subdomain);
    ~DualNormEvaluator();
    DualNormEvaluator(DualNormEvaluator&&) noexcept;
    DualNormEvaluator& operator=(DualNormEvaluator&&) noexcept;

    DualNormResult evaluate(const VectorField& f, int max_iter = 200, double tol = 1e-8) const;

    /// Number of stream-function degrees of freedom supported in the subdomain.
    int dimension() const noexcept;
    /// Velocity of a stream function given on the subdomain's nodes.
    VectorField field_from_coordinates(const Eigen::VectorXd& coords) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Convenience wrapper building a one-shot evaluator. Throws DomainError for a
/// subdomain without interior degrees of freedom.
DualNormResult dual_norm_W_star(const VectorField& f, const Subdomain& subdomain, int max_iter = 200,
                                double tol = 1e-8);

struct PoincareEstimate {
    double constant = 0.0;    ///< L_P = 1 / sqrt(lambda_min)
    double lambda_min = 0.0;  ///< smallest discrete Stokes eigenvalue
    int iterations = 0;
};

PoincareEstimate poincare_estimate(const MacGrid& grid, double tol = 1e-12, int max_iter = 500);
double poincare_constant(const MacGrid& grid);

struct ConstantEntry {
    std::string name;
    double value = 0.0;
    std::string method;
    int iterations = 0;
};

/// Discrete surrogates of the embedding constants. L0, L2, L3 are lower estimates
/// (maxima found by ascent); L1 is the Poincare constant.
struct ConstantsReport {
    double L_P = 0.0;
    double L0 = 0.0;
    double L1 = 0.0;
    double L2 = 0.0;
    double L3 = 0.0;
    std::vector<ConstantEntry> entries;
};

ConstantsReport embedding_constants(const MacGrid& grid, int restarts, std::uint64_t seed = 20240607);

}  // namespace nsvi
