//! Uniform quadrilateral grids on axis-aligned rectangles and the
//! vertical-split partition used by the coupled solver.
//!
//! Nodes are numbered lexicographically (x fastest), elements are stored with
//! counter-clockwise corner ordering. A partition duplicates the nodes on the
//! split line into both subdomains; within each subdomain the degrees of
//! freedom are permuted interface-first: interface nodes bottom to top, then
//! interior nodes, then Dirichlet nodes. Nodes lying on both the outer
//! Dirichlet boundary and the interface (the interface endpoints on an
//! all-Dirichlet rectangle) classify as Dirichlet.

use crate::error::{Error, Result};

const GRID_SNAP: f64 = 1e-9;

/// Structured quad mesh on `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub hx: f64,
    pub hy: f64,
    /// Node coordinates, `id = row * (nx + 1) + col`.
    pub coords: Vec<[f64; 2]>,
    /// Element corner nodes, counter-clockwise from the bottom-left.
    pub elems: Vec<[usize; 4]>,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn node_id(&self, col: usize, row: usize) -> usize {
        row * (self.nx + 1) + col
    }

    /// Element width; equals the height on square-element meshes.
    pub fn h(&self) -> f64 {
        self.hx
    }
}

/// Builds a uniform `nx x ny` quad mesh on the rectangle
/// `[x0, x1] x [y0, y1]`.
pub fn build_uniform_mesh(nx: usize, ny: usize, rect: [f64; 4]) -> Result<Mesh> {
    let [x0, x1, y0, y1] = rect;
    if nx == 0 || ny == 0 {
        return Err(Error::Config("mesh needs nx >= 1 and ny >= 1".into()));
    }
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::Config(format!(
            "degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]"
        )));
    }
    let hx = (x1 - x0) / nx as f64;
    let hy = (y1 - y0) / ny as f64;
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    for row in 0..=ny {
        for col in 0..=nx {
            coords.push([x0 + col as f64 * hx, y0 + row as f64 * hy]);
        }
    }
    let mut elems = Vec::with_capacity(nx * ny);
    for row in 0..ny {
        for col in 0..nx {
            let bl = row * (nx + 1) + col;
            elems.push([bl, bl + 1, bl + nx + 2, bl + nx + 1]);
        }
    }
    Ok(Mesh {
        nx,
        ny,
        x0,
        x1,
        y0,
        y1,
        hx,
        hy,
        coords,
        elems,
    })
}

/// Which outer sides of the rectangle carry Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirichletSides {
    pub left: bool,
    pub right: bool,
    pub bottom: bool,
    pub top: bool,
}

impl Default for DirichletSides {
    fn default() -> Self {
        Self {
            left: true,
            right: true,
            bottom: true,
            top: true,
        }
    }
}

/// Classification of a subdomain node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interface,
    Interior,
    Dirichlet,
}

/// One side of a partitioned mesh (or the whole mesh, with an empty
/// interface) together with its interface-first DoF permutation.
#[derive(Debug, Clone)]
pub struct Subdomain {
    /// 1 for the left side of the split, 2 for the right, 0 for a whole
    /// domain.
    pub side: u8,
    pub mesh: Mesh,
    /// Local geometric node -> node id in the parent mesh.
    pub parent_nodes: Vec<usize>,
    pub class: Vec<NodeClass>,
    /// DoF index -> local geometric node. Interface DoFs come first (bottom
    /// to top), then interior (lexicographic), then Dirichlet.
    pub dof_to_node: Vec<usize>,
    /// Local geometric node -> DoF index.
    pub node_to_dof: Vec<usize>,
    pub n_gamma: usize,
    pub n_interior: usize,
    pub n_dirichlet: usize,
}

impl Subdomain {
    pub fn n(&self) -> usize {
        self.n_gamma + self.n_interior + self.n_dirichlet
    }

    /// Number of unconstrained DoFs (interface + interior).
    pub fn n_d(&self) -> usize {
        self.n_gamma + self.n_interior
    }

    /// Local geometric nodes of the interface DoFs, bottom to top.
    pub fn gamma_nodes(&self) -> &[usize] {
        &self.dof_to_node[..self.n_gamma]
    }

    /// Local geometric nodes of the Dirichlet DoFs.
    pub fn dirichlet_nodes(&self) -> &[usize] {
        &self.dof_to_node[self.n_d()..]
    }

    /// y-coordinates of the interface DoFs, bottom to top.
    pub fn interface_ys(&self) -> Vec<f64> {
        self.gamma_nodes()
            .iter()
            .map(|&n| self.mesh.coords[n][1])
            .collect()
    }

    /// Wraps an unpartitioned mesh as a degenerate subdomain with no
    /// interface, so the single-domain solver shares the assembly and
    /// stepping paths.
    pub fn whole(mesh: Mesh, sides: DirichletSides) -> Subdomain {
        let n = mesh.n_nodes();
        let parent_nodes = (0..n).collect();
        let class = classify(&mesh, sides, None);
        build_subdomain(0, mesh, parent_nodes, class)
    }
}

fn classify(mesh: &Mesh, sides: DirichletSides, interface_col: Option<usize>) -> Vec<NodeClass> {
    let mut class = vec![NodeClass::Interior; mesh.n_nodes()];
    for row in 0..=mesh.ny {
        for col in 0..=mesh.nx {
            let id = mesh.node_id(col, row);
            let dirichlet = (sides.left && col == 0)
                || (sides.right && col == mesh.nx)
                || (sides.bottom && row == 0)
                || (sides.top && row == mesh.ny);
            if dirichlet {
                class[id] = NodeClass::Dirichlet;
            } else if interface_col == Some(col) {
                class[id] = NodeClass::Interface;
            }
        }
    }
    class
}

fn build_subdomain(
    side: u8,
    mesh: Mesh,
    parent_nodes: Vec<usize>,
    class: Vec<NodeClass>,
) -> Subdomain {
    let n = mesh.n_nodes();
    let mut gamma: Vec<usize> = (0..n)
        .filter(|&i| class[i] == NodeClass::Interface)
        .collect();
    // Lexicographic ids on a single column are already bottom-to-top, but the
    // ordering contract is by y, so sort explicitly.
    gamma.sort_by(|&a, &b| {
        mesh.coords[a][1]
            .partial_cmp(&mesh.coords[b][1])
            .unwrap()
    });
    let interior: Vec<usize> = (0..n)
        .filter(|&i| class[i] == NodeClass::Interior)
        .collect();
    let dirichlet: Vec<usize> = (0..n)
        .filter(|&i| class[i] == NodeClass::Dirichlet)
        .collect();

    let n_gamma = gamma.len();
    let n_interior = interior.len();
    let n_dirichlet = dirichlet.len();
    let mut dof_to_node = gamma;
    dof_to_node.extend(interior);
    dof_to_node.extend(dirichlet);
    let mut node_to_dof = vec![0usize; n];
    for (dof, &node) in dof_to_node.iter().enumerate() {
        node_to_dof[node] = dof;
    }
    Subdomain {
        side,
        mesh,
        parent_nodes,
        class,
        dof_to_node,
        node_to_dof,
        n_gamma,
        n_interior,
        n_dirichlet,
    }
}

/// Splits `mesh` along the vertical grid line `x = x_split` into a left and a
/// right subdomain. The split must land on a grid line strictly inside the
/// rectangle; the nodes on it are duplicated into both subdomains as
/// interface nodes, except where they touch a Dirichlet outer side.
pub fn partition_at(
    mesh: &Mesh,
    x_split: f64,
    sides: DirichletSides,
) -> Result<(Subdomain, Subdomain)> {
    let rel = (x_split - mesh.x0) / mesh.hx;
    let col = rel.round() as isize;
    if (rel - rel.round()).abs() > GRID_SNAP {
        return Err(Error::Config(format!(
            "split x = {x_split} is not on a grid line (offset {:.2e} cells)",
            (rel - rel.round()).abs()
        )));
    }
    if col <= 0 || col >= mesh.nx as isize {
        return Err(Error::Config(format!(
            "split x = {x_split} must be strictly inside the mesh"
        )));
    }
    let col = col as usize;

    let left_mesh = build_uniform_mesh(col, mesh.ny, [mesh.x0, x_split, mesh.y0, mesh.y1])?;
    let right_mesh =
        build_uniform_mesh(mesh.nx - col, mesh.ny, [x_split, mesh.x1, mesh.y0, mesh.y1])?;

    let left_parents: Vec<usize> = (0..=mesh.ny)
        .flat_map(|row| (0..=col).map(move |c| row * (mesh.nx + 1) + c))
        .collect();
    let right_parents: Vec<usize> = (0..=mesh.ny)
        .flat_map(|row| (col..=mesh.nx).map(move |c| row * (mesh.nx + 1) + c))
        .collect();

    let left_sides = DirichletSides {
        right: false,
        ..sides
    };
    let right_sides = DirichletSides {
        left: false,
        ..sides
    };
    let left_class = classify(&left_mesh, left_sides, Some(col));
    let right_class = classify(&right_mesh, right_sides, Some(0));

    let s1 = build_subdomain(1, left_mesh, left_parents, left_class);
    let s2 = build_subdomain(2, right_mesh, right_parents, right_class);
    if s1.n_gamma != s2.n_gamma {
        return Err(Error::DimensionMismatch(format!(
            "interface DoF counts differ: {} vs {}",
            s1.n_gamma, s2.n_gamma
        )));
    }
    Ok((s1, s2))
}
