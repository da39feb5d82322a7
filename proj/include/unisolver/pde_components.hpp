#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace unisolver {

// Which side of the conditioning split a PDE component lives on: domain-wise
// components are constant over the solution domain (one value per equation),
// point-wise components vary per grid point.
enum class Category { DomainWise, PointWise };

enum class ComponentKind {
    EquationFormulation,
    EquationCoefficient,
    BoundaryConditionType,
    ExternalForce,
    DomainGeometry,
    BoundaryValueFunction,
};

Category categorize(ComponentKind kind);
ComponentKind component_kind_from_string(const std::string& name);
std::string component_kind_name(ComponentKind kind);

enum class BoundaryKind : std::uint8_t {
    Periodic = 0,
    Dirichlet = 1,
    Neumann = 2,
    Robin = 3,
};

std::string boundary_kind_name(BoundaryKind kind);

// One endpoint of a non-periodic 1-D boundary, stored in Robin form
// alpha * u + beta * du/dn = gamma (outward normal). Dirichlet and Neumann
// are the (1, 0, g) and (0, 1, g) corner cases of the same triple.
struct EndpointCondition {
    BoundaryKind kind = BoundaryKind::Dirichlet;
    double alpha = 1.0;
    double beta = 0.0;
    double gamma = 0.0;
};

struct BoundaryCondition {
    bool periodic = true;
    EndpointCondition left;
    EndpointCondition right;
};

// Uniform rectangular grid. 1-D grids use n_x; 2-D grids add n_y. Time is
// discretized into n_t snapshot levels over [t_min, t_max].
struct GridSpec {
    std::size_t spatial_dims = 1;
    std::size_t n_x = 0;
    std::size_t n_y = 0;
    std::size_t n_t = 1;
    double x_min = 0.0, x_max = 1.0;
    double y_min = 0.0, y_max = 1.0;
    double t_min = 0.0, t_max = 1.0;

    double dx() const;
    double dy() const;
    double dt() const;
};

// Named dense field with explicit shape, e.g. {channels, n_x} or
// {channels, n_y, n_x} or {channels, n_t, n_x}.
struct Field {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;

    std::size_t size() const;
};

// The conditioning payload attached to one sample. Optional fields carry an
// explicit presence flag; an absent component must contribute nothing
// downstream rather than being imputed.
struct PDEComponents {
    std::string symbols;  // symbolic equation text, e.g. "\partial_t u + ..."
    std::map<std::string, double> coefficients;
    BoundaryCondition boundary;

    bool has_force = false;
    Field force;  // s(x), f(x), or f(x,t) depending on the family
    bool has_kappa = false;
    Field kappa;  // diffusion field kappa(x)
    bool has_geometry = false;
    Field geometry_mask;  // binary mask, 1 = inside the domain
    bool has_boundary_values = false;
    Field boundary_values;  // zero except on the grid boundary
};

enum class SplitTag : std::uint8_t { ID = 0, OOD = 1 };

struct Sample {
    PDEComponents components;
    std::vector<Field> inputs;
    std::vector<Field> outputs;
    SplitTag split = SplitTag::ID;
};

// Structural checks for one sample against its grid. Returns every violation
// found (empty means valid): shape/grid consistency, finite values, binary
// geometry masks, boundary values vanishing off the one-cell border, and
// periodic boundaries excluding per-endpoint value functions.
std::vector<std::string> validate(const Sample& sample, const GridSpec& grid);

}  // namespace unisolver
