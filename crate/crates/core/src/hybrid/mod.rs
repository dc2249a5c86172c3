//! Meshes carrying the hybrid measure `dx (+) dm`, nodal hybrid functions,
//! `L^q`-ball projections and the geometric checks on `Sigma`.

mod density;
mod function;
mod koch;
mod mesh;
mod projection;

pub use density::{density_ratio, measure_density_check, point_in_domain, DensityReport, DensitySample};
pub use function::{embed_j, hybrid_norm, hybrid_norm_parts, restrict_jinv, HybridFunction};
pub use koch::{koch_dimension, koch_prefractal, upper_ell_check, KochPrefractal, KochSegment, MAX_KOCH_LEVEL};
pub use mesh::{
    build_mesh, BoundaryEdge, Domain, EdgeLabel, HybridMesh, InterfaceSpec, MeasureRule, MeshFile, MeshSpec, Point,
};
pub use projection::project_lq_ball;

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(l: [EdgeLabel; 4]) -> MeshSpec {
        MeshSpec::unit_square(0.25, l)
    }

    #[test]
    fn all_dynamic_square() {
        let m = build_mesh(&labels([EdgeLabel::Dynamic; 4])).unwrap();
        assert_eq!(m.boundary_edges().len(), 16);
        assert!((m.total_sigma_measure() - 4.0).abs() < 1e-14);
        assert!(m.acute_flag());
        assert!((m.volume_weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((m.sigma_weights().iter().sum::<f64>() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn midline_interface() {
        use EdgeLabel::*;
        let spec = labels([Neumann, Neumann, Neumann, Dirichlet]).with_interface(vec![[0.0, 0.5], [1.0, 0.5]], MeasureRule::ArcLength);
        let m = build_mesh(&spec).unwrap();
        assert_eq!(m.interface_edges().len(), 4);
        assert!((m.total_sigma_measure() - 1.0).abs() < 1e-14);
        // the left end of the midline is a Dirichlet vertex
        assert!((m.sigma_weights().iter().sum::<f64>() - 0.875).abs() < 1e-14);
        assert!((m.vertex_sigma_weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((m.vertex_volume_weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn interface_off_the_edges_is_rejected() {
        let spec = labels([EdgeLabel::Neumann; 4]).with_interface(vec![[0.0, 0.3], [1.0, 0.3]], MeasureRule::ArcLength);
        assert!(matches!(build_mesh(&spec), Err(crate::Error::BadGeometry(_))));
    }

    #[test]
    fn all_dirichlet_is_rejected() {
        assert!(matches!(build_mesh(&labels([EdgeLabel::Dirichlet; 4])), Err(crate::Error::BadGeometry(_))));
        let mut spec = labels([EdgeLabel::Dirichlet; 4]);
        spec.allow_empty_sigma = true;
        assert!(build_mesh(&spec).is_ok());
    }

    #[test]
    fn koch_boundary_measure() {
        let mut spec = labels([EdgeLabel::Neumann, EdgeLabel::Neumann, EdgeLabel::Dynamic, EdgeLabel::Neumann]);
        spec.boundary_measure = MeasureRule::Koch { level: 4 };
        let m = build_mesh(&spec).unwrap();
        assert!((m.total_sigma_measure() - 1.0).abs() < 1e-12);
        let w: Vec<f64> = m.edge_measures().iter().copied().filter(|&w| w > 0.0).collect();
        assert_eq!(w.len(), 4);
        // symmetric curve: outer quarters carry equal mass
        assert!((w[0] - w[3]).abs() < 1e-12);
    }

    #[test]
    fn polygon_mesh() {
        let spec = MeshSpec {
            domain: Domain::Polygon { vertices: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]] },
            h: 0.3,
            side_labels: vec![EdgeLabel::Dynamic; 6],
            boundary_measure: MeasureRule::ArcLength,
            interface: None,
            allow_empty_sigma: false,
        };
        let m = build_mesh(&spec).unwrap();
        assert!((m.area() - 3.0).abs() < 1e-12);
        assert!((m.total_sigma_measure() - 8.0).abs() < 1e-12);
        assert!(m.max_edge_length() <= 0.3 + 1e-12);
        let crossed = MeshSpec {
            domain: Domain::Polygon { vertices: vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]] },
            ..spec
        };
        assert!(matches!(build_mesh(&crossed), Err(crate::Error::BadGeometry(_))));
    }

    #[test]
    fn clockwise_polygon_keeps_side_labels() {
        use EdgeLabel::*;
        let spec = MeshSpec {
            domain: Domain::Polygon { vertices: vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]] },
            h: 0.5,
            side_labels: vec![Dynamic, Neumann, Neumann, Neumann],
            boundary_measure: MeasureRule::ArcLength,
            interface: None,
            allow_empty_sigma: false,
        };
        let m = build_mesh(&spec).unwrap();
        let v = m.vertices();
        for e in m.boundary_edges().iter().filter(|e| e.label == Dynamic) {
            assert!(v[e.v0][0].abs() < 1e-14 && v[e.v1][0].abs() < 1e-14);
        }
        assert!((m.total_sigma_measure() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mesh_file_round_trip() {
        let m = build_mesh(&labels([EdgeLabel::Dynamic, EdgeLabel::Neumann, EdgeLabel::Dirichlet, EdgeLabel::Neumann])).unwrap();
        let json = serde_json::to_string(m.to_file()).unwrap();
        assert!(json.contains("\"boundary_edges\"") && json.contains("\"label\":\"dynamic\""));
        let back = HybridMesh::from_file(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn point_masses_add_to_sigma() {
        let m = build_mesh(&labels([EdgeLabel::Dirichlet; 4]).clone()).err();
        assert!(m.is_some());
        let base = build_mesh(&labels([EdgeLabel::Neumann, EdgeLabel::Neumann, EdgeLabel::Dynamic, EdgeLabel::Dirichlet])).unwrap();
        let mut file = base.to_file().clone();
        let interior = (0..base.n_vertices()).find(|&v| base.vertices()[v] == [0.5, 0.5]).unwrap();
        file.vertex_masses.insert(interior, 0.25);
        let m = HybridMesh::from_file(file).unwrap();
        assert!((m.total_sigma_measure() - 1.25).abs() < 1e-14);
        assert!(m.is_sigma_dof(m.dof_of_vertex(interior).unwrap()));
    }
}
