//! Relation-structure diagnostics: Krackhardt hierarchy score, shortest-path
//! statistics, relation-matrix symmetry, relation-vector norms, eigenvalue
//! magnitude profiles, and the taxonomy-joined structure report.

use std::collections::HashMap;

use crate::data::{EntityId, RelationId, RelationTaxonomy, Triple, TripleStore};
use crate::error::{KgError, Result};
use crate::models::{tucker_relation_matrix, Matrix, ModelParams};
use crate::parallel;

/// Directed graph over the entities incident to one relation.
#[derive(Debug, Clone, Default)]
pub struct RelationGraph {
    /// Compact node ids; `nodes[i]` is the entity behind node i.
    pub nodes: Vec<EntityId>,
    /// Out-adjacency per compact node id.
    pub adj: Vec<Vec<usize>>,
    /// Reverse adjacency.
    pub radj: Vec<Vec<usize>>,
}

impl RelationGraph {
    pub fn from_edges(edges: impl IntoIterator<Item = (EntityId, EntityId)>) -> Self {
        let mut compact: HashMap<EntityId, usize> = HashMap::new();
        let mut g = RelationGraph::default();
        let intern = |g: &mut RelationGraph,
                          compact: &mut HashMap<EntityId, usize>,
                          e: EntityId| match compact.get(&e) {
            Some(&i) => i,
            None => {
                let i = g.nodes.len();
                compact.insert(e, i);
                g.nodes.push(e);
                g.adj.push(Vec::new());
                g.radj.push(Vec::new());
                i
            }
        };
        for (s, o) in edges {
            let si = intern(&mut g, &mut compact, s);
            let oi = intern(&mut g, &mut compact, o);
            g.adj[si].push(oi);
            g.radj[oi].push(si);
        }
        g
    }

    /// Builds the graph of one relation from the training split (or all
    /// splits when `all_splits` is set).
    pub fn from_store(store: &TripleStore, relation: RelationId, all_splits: bool) -> Self {
        let pick = |triples: &[Triple]| {
            triples
                .iter()
                .filter(|t| t.r == relation)
                .map(|t| (t.s, t.o))
                .collect::<Vec<_>>()
        };
        let mut edges = pick(&store.train);
        if all_splits {
            edges.extend(pick(&store.valid));
            edges.extend(pick(&store.test));
        }
        RelationGraph::from_edges(edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes reachable from `start` by paths of length >= 1 (may include
    /// `start` itself when it lies on a cycle).
    fn reachable(&self, start: usize, adj: &[Vec<usize>]) -> Vec<bool> {
        let mut seen = vec![false; self.n_nodes()];
        let mut queue: Vec<usize> = adj[start].clone();
        for &n in &adj[start] {
            seen[n] = true;
        }
        while let Some(u) = queue.pop() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push(w);
                }
            }
        }
        seen
    }
}

/// Krackhardt hierarchy score: of the ordered node pairs connected by a
/// directed path, the proportion connected in one direction only.
///
/// Reachability uses paths of length >= 1 with diagonal pairs (x, x)
/// excluded, so acyclic chains score exactly 1 and cycles score 0. Returns
/// 0 for graphs with no connected pair.
pub fn khs(graph: &RelationGraph) -> f64 {
    let n = graph.n_nodes();
    let idx: Vec<usize> = (0..n).collect();
    let counts = parallel::map_ordered(&idx, |&x| {
        let fwd = graph.reachable(x, &graph.adj);
        let back = graph.reachable(x, &graph.radj);
        let mut reach = 0usize;
        let mut one_way = 0usize;
        for y in 0..n {
            if y == x || !fwd[y] {
                continue;
            }
            reach += 1;
            if !back[y] {
                one_way += 1;
            }
        }
        (reach, one_way)
    });
    let (denom, numer) = counts
        .iter()
        .fold((0usize, 0usize), |(d, s), &(r, o)| (d + r, s + o));
    if denom == 0 {
        0.0
    } else {
        numer as f64 / denom as f64
    }
}

/// Max and mean shortest directed path length over all ordered node pairs
/// (x, y), x != y, connected by a directed path. `None` when no pair is
/// connected.
pub fn path_stats(graph: &RelationGraph) -> Option<(usize, f64)> {
    let n = graph.n_nodes();
    let idx: Vec<usize> = (0..n).collect();
    let partials = parallel::map_ordered(&idx, |&x| {
        // BFS over shortest path lengths from x
        let mut dist = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::new();
        for &w in &graph.adj[x] {
            if w != x && dist[w] == usize::MAX {
                dist[w] = 1;
                queue.push_back(w);
            }
        }
        let mut max_d = 0usize;
        let mut sum_d = 0u64;
        let mut count = 0u64;
        while let Some(u) = queue.pop_front() {
            let d = dist[u];
            if u != x {
                max_d = max_d.max(d);
                sum_d += d as u64;
                count += 1;
            }
            for &w in &graph.adj[u] {
                if w != x && dist[w] == usize::MAX {
                    dist[w] = d + 1;
                    queue.push_back(w);
                }
            }
        }
        (max_d, sum_d, count)
    });
    let (max_d, sum_d, count) = partials.iter().fold((0usize, 0u64, 0u64), |acc, &p| {
        (acc.0.max(p.0), acc.1 + p.1, acc.2 + p.2)
    });
    if count == 0 {
        None
    } else {
        Some((max_d, sum_d as f64 / count as f64))
    }
}

/// Symmetry statistic of a square matrix over its off-diagonal entries:
/// the Pearson correlation between entries (i, j) and (j, i). 1 for
/// symmetric matrices, -1 for anti-symmetric ones.
pub fn symmetry_score(m: &Matrix) -> Result<f64> {
    assert_eq!(m.rows, m.cols, "symmetry score needs a square matrix");
    let d = m.rows;
    let pairs = (d * (d - 1)) as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_cross = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let a = m.row(i)[j];
            sum += a;
            sum_sq += a * a;
            sum_cross += a * m.row(j)[i];
        }
    }
    let denom = sum_sq - sum * sum / pairs;
    if denom.abs() < 1e-300 {
        return Err(KgError::ZeroOffDiagonalVariance);
    }
    Ok((sum_cross - sum * sum / pairs) / denom)
}

/// Euclidean norms of every relation's translation vector.
pub fn vector_norms(params: &ModelParams) -> Result<Vec<f64>> {
    if !params.kind.has_translation() {
        return Err(KgError::NoTranslationVector(params.kind));
    }
    Ok((0..params.dims.n_r)
        .map(|r| {
            params
                .relation_vec
                .row(r)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Entry magnitudes of a diagonal relation matrix, sorted descending and
/// scaled by the largest.
pub fn eigen_profile(diag: &[f64]) -> Result<Vec<f64>> {
    let mut mags: Vec<f64> = diag.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let max = mags[0];
    if max == 0.0 {
        return Err(KgError::DegenerateProfile);
    }
    for m in mags.iter_mut() {
        *m /= max;
    }
    Ok(mags)
}

/// One row of the structure report.
#[derive(Debug, Clone)]
pub struct StructureRow {
    pub relation: RelationId,
    pub label: String,
    pub relation_type: Option<String>,
    pub train_fraction: f64,
    pub test_count: usize,
    pub khs: f64,
    pub max_path: Option<usize>,
    pub avg_path: Option<f64>,
    pub symmetry: Option<f64>,
    pub vector_norm: Option<f64>,
    pub eigen_profile: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct StructureReport {
    /// Whether relation graphs were built from the train split only.
    pub train_only_graphs: bool,
    pub rows: Vec<StructureRow>,
}

/// Joins graph diagnostics (always) with model diagnostics (when params are
/// given) per relation, plus the taxonomy label and split counts.
pub fn structure_report(
    params: Option<&ModelParams>,
    store: &TripleStore,
    taxonomy: Option<&RelationTaxonomy>,
    relation_labels: &[String],
    all_splits: bool,
) -> Result<StructureReport> {
    let n_r = relation_labels.len();
    let mut train_counts = vec![0usize; n_r];
    for t in &store.train {
        train_counts[t.r as usize] += 1;
    }
    let mut test_counts = vec![0usize; n_r];
    for t in &store.test {
        test_counts[t.r as usize] += 1;
    }
    let train_total = store.train.len().max(1) as f64;

    let norms = match params {
        Some(p) if p.kind.has_translation() => Some(vector_norms(p)?),
        _ => None,
    };

    let mut rows = Vec::with_capacity(n_r);
    for r in 0..n_r as RelationId {
        let graph = RelationGraph::from_store(store, r, all_splits);
        let paths = path_stats(&graph);
        let symmetry = match params {
            Some(p) if p.kind.is_tucker() => Some(symmetry_score(&tucker_relation_matrix(p, r)?)?),
            Some(p) if p.kind.has_diagonal() => {
                // a diagonal matrix is exactly symmetric, but its off-diagonal
                // entries are constant (all zero), so the statistic is undefined
                None
            }
            _ => None,
        };
        let eigen = match params {
            Some(p) if p.kind.has_diagonal() => Some(eigen_profile(p.relation_diag.row(r as usize))?),
            _ => None,
        };
        rows.push(StructureRow {
            relation: r,
            label: relation_labels[r as usize].clone(),
            relation_type: taxonomy.and_then(|t| t.get(r)).map(|ty| ty.to_string()),
            train_fraction: train_counts[r as usize] as f64 / train_total,
            test_count: test_counts[r as usize],
            khs: khs(&graph),
            max_path: paths.map(|(m, _)| m),
            avg_path: paths.map(|(_, a)| a),
            symmetry,
            vector_norm: norms.as_ref().map(|n| n[r as usize]),
            eigen_profile: eigen,
        });
    }
    Ok(StructureReport {
        train_only_graphs: !all_splits,
        rows,
    })
}

/// Mean area under an eigen profile (mean of the scaled magnitudes).
pub fn profile_area(profile: &[f64]) -> f64 {
    profile.iter().sum::<f64>() / profile.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, Dims, ModelKind};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn graph(edges: &[(u32, u32)]) -> RelationGraph {
        RelationGraph::from_edges(edges.iter().copied())
    }

    /// Brute-force reachability by repeated edge relaxation.
    fn brute_khs(edges: &[(u32, u32)]) -> f64 {
        let nodes: Vec<u32> = {
            let mut v: Vec<u32> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let n = nodes.len();
        let pos = |e: u32| nodes.iter().position(|&x| x == e).unwrap();
        let mut reach = vec![vec![false; n]; n];
        for &(a, b) in edges {
            reach[pos(a)][pos(b)] = true;
        }
        loop {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    if !reach[i][j] {
                        continue;
                    }
                    for k in 0..n {
                        if reach[j][k] && !reach[i][k] {
                            reach[i][k] = true;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut denom = 0;
        let mut numer = 0;
        for i in 0..n {
            for j in 0..n {
                if i != j && reach[i][j] {
                    denom += 1;
                    if !reach[j][i] {
                        numer += 1;
                    }
                }
            }
        }
        if denom == 0 {
            0.0
        } else {
            numer as f64 / denom as f64
        }
    }

    #[test]
    fn khs_chain_is_one() {
        assert_eq!(khs(&graph(&[(0, 1), (1, 2)])), 1.0);
    }

    #[test]
    fn khs_two_cycle_is_zero() {
        assert_eq!(khs(&graph(&[(0, 1), (1, 0)])), 0.0);
    }

    #[test]
    fn khs_hand_case_half() {
        // {a->b, b->a, a->c}: pairs (a,b),(b,a) two-way; (a,c),(b,c) one-way
        let edges = [(0, 1), (1, 0), (0, 2)];
        assert_eq!(khs(&graph(&edges)), 0.5);
        assert_eq!(brute_khs(&edges), 0.5);
    }

    #[test]
    fn khs_matches_brute_force_on_random_graphs() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..30 {
            let n = rng.random_range(2..9u32);
            let mut edges = Vec::new();
            for a in 0..n {
                for b in 0..n {
                    if a != b && rng.random_bool(0.25) {
                        edges.push((a, b));
                    }
                }
            }
            if edges.is_empty() {
                continue;
            }
            let fast = khs(&graph(&edges));
            let slow = brute_khs(&edges);
            assert!((fast - slow).abs() < 1e-12, "edges {edges:?}");
        }
    }

    fn random_dag(rng: &mut ChaCha12Rng) -> Vec<(u32, u32)> {
        // edges only from lower to higher ids
        let n = rng.random_range(3..12u32);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.random_bool(0.4) {
                    edges.push((a, b));
                }
            }
        }
        if edges.is_empty() {
            edges.push((0, 1));
        }
        edges
    }

    fn random_strongly_connected(rng: &mut ChaCha12Rng) -> Vec<(u32, u32)> {
        // a directed ring plus random chords
        let n = rng.random_range(2..12u32);
        let mut edges: Vec<(u32, u32)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        for a in 0..n {
            for b in 0..n {
                if a != b && rng.random_bool(0.2) {
                    edges.push((a, b));
                }
            }
        }
        edges
    }

    #[test]
    fn khs_one_on_dags_zero_on_strongly_connected() {
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        for _ in 0..100 {
            assert_eq!(khs(&graph(&random_dag(&mut rng))), 1.0);
        }
        for _ in 0..100 {
            assert_eq!(khs(&graph(&random_strongly_connected(&mut rng))), 0.0);
        }
    }

    #[test]
    fn path_stats_single_edge() {
        assert_eq!(path_stats(&graph(&[(0, 1)])), Some((1, 1.0)));
    }

    #[test]
    fn path_stats_chain() {
        // a->b->c: pairs (a,b)=1, (b,c)=1, (a,c)=2
        let (max, avg) = path_stats(&graph(&[(0, 1), (1, 2)])).unwrap();
        assert_eq!(max, 2);
        assert!((avg - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn path_stats_exhaustive_bfs_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = rng.random_range(2..10u32);
            let mut edges = Vec::new();
            for a in 0..n {
                for b in 0..n {
                    if a != b && rng.random_bool(0.3) {
                        edges.push((a, b));
                    }
                }
            }
            if edges.is_empty() {
                continue;
            }
            let g = graph(&edges);
            // oracle: Floyd-Warshall
            let nn = g.n_nodes();
            let inf = usize::MAX / 2;
            let mut dist = vec![vec![inf; nn]; nn];
            for (i, outs) in g.adj.iter().enumerate() {
                for &j in outs {
                    if i != j {
                        dist[i][j] = 1;
                    }
                }
            }
            for k in 0..nn {
                for i in 0..nn {
                    for j in 0..nn {
                        if dist[i][k] + dist[k][j] < dist[i][j] {
                            dist[i][j] = dist[i][k] + dist[k][j];
                        }
                    }
                }
            }
            let mut max_d = 0;
            let mut sum = 0usize;
            let mut cnt = 0usize;
            for i in 0..nn {
                for j in 0..nn {
                    if i != j && dist[i][j] < inf {
                        max_d = max_d.max(dist[i][j]);
                        sum += dist[i][j];
                        cnt += 1;
                    }
                }
            }
            let expect = if cnt == 0 {
                None
            } else {
                Some((max_d, sum as f64 / cnt as f64))
            };
            let got = path_stats(&g);
            match (got, expect) {
                (None, None) => {}
                (Some((gm, ga)), Some((em, ea))) => {
                    assert_eq!(gm, em);
                    assert!((ga - ea).abs() < 1e-12);
                }
                other => panic!("mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn path_stats_no_pair() {
        let g = RelationGraph::from_edges(std::iter::empty());
        assert_eq!(path_stats(&g), None);
    }

    fn random_matrix(rng: &mut ChaCha12Rng, d: usize) -> Matrix {
        let mut m = Matrix::zeros(d, d);
        for v in m.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        m
    }

    fn symmetrized(m: &Matrix) -> Matrix {
        let d = m.rows;
        let mut out = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                out.row_mut(i)[j] = 0.5 * (m.row(i)[j] + m.row(j)[i]);
            }
        }
        out
    }

    fn antisymmetrized(m: &Matrix) -> Matrix {
        let d = m.rows;
        let mut out = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                out.row_mut(i)[j] = 0.5 * (m.row(i)[j] - m.row(j)[i]);
            }
        }
        out
    }

    /// Pearson correlation between vectorized off-diagonal (i,j) and (j,i).
    fn pearson_oracle(m: &Matrix) -> f64 {
        let d = m.rows;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    xs.push(m.row(i)[j]);
                    ys.push(m.row(j)[i]);
                }
            }
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
        cov / (vx.sqrt() * vy.sqrt())
    }

    #[test]
    fn symmetry_extremes() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..10 {
            let m = random_matrix(&mut rng, 20);
            assert!((symmetry_score(&symmetrized(&m)).unwrap() - 1.0).abs() < 1e-12);
            assert!((symmetry_score(&antisymmetrized(&m)).unwrap() + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetry_matches_pearson_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 5);
            let s = symmetry_score(&m).unwrap();
            assert!((s - pearson_oracle(&m)).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetry_invariances() {
        let mut rng = ChaCha12Rng::seed_from_u64(51);
        let m = random_matrix(&mut rng, 6);
        let base = symmetry_score(&m).unwrap();
        // positive scaling
        let mut scaled = m.clone();
        for v in scaled.data.iter_mut() {
            *v *= 3.7;
        }
        assert!((symmetry_score(&scaled).unwrap() - base).abs() < 1e-10);
        // constant shift of off-diagonals
        let mut shifted = m.clone();
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    shifted.row_mut(i)[j] += 0.9;
                }
            }
        }
        assert!((symmetry_score(&shifted).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn symmetry_undefined_for_constant_offdiag() {
        let m = Matrix::zeros(4, 4);
        assert!(matches!(
            symmetry_score(&m),
            Err(KgError::ZeroOffDiagonalVariance)
        ));
    }

    #[test]
    fn vector_norm_values() {
        let dims = Dims {
            d_e: 2,
            d_r: 1,
            n_e: 2,
            n_r: 2,
        };
        let mut p = init_params(ModelKind::TransE, dims, 0);
        p.relation_vec.row_mut(0).copy_from_slice(&[0.0, 0.0]);
        p.relation_vec.row_mut(1).copy_from_slice(&[3.0, 4.0]);
        assert_eq!(vector_norms(&p).unwrap(), vec![0.0, 5.0]);
    }

    #[test]
    fn vector_norm_wrong_kind() {
        let dims = Dims {
            d_e: 2,
            d_r: 1,
            n_e: 2,
            n_r: 1,
        };
        let p = init_params(ModelKind::DistMult, dims, 0);
        assert!(matches!(
            vector_norms(&p),
            Err(KgError::NoTranslationVector(_))
        ));
    }

    #[test]
    fn eigen_profile_direct_scaling() {
        assert_eq!(
            eigen_profile(&[2.0, -1.0, 0.5]).unwrap(),
            vec![1.0, 0.5, 0.25]
        );
    }

    #[test]
    fn eigen_profile_constant_diag() {
        assert_eq!(eigen_profile(&[0.7, -0.7, 0.7]).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn eigen_profile_scale_invariant() {
        let diag = [0.3, -0.9, 0.1, 0.5];
        let scaled: Vec<f64> = diag.iter().map(|v| v * -4.2).collect();
        assert_eq!(
            eigen_profile(&diag).unwrap(),
            eigen_profile(&scaled).unwrap()
        );
    }

    #[test]
    fn eigen_profile_degenerate() {
        assert!(matches!(
            eigen_profile(&[0.0, 0.0]),
            Err(KgError::DegenerateProfile)
        ));
    }

    #[test]
    fn structure_report_composes_direct_calls() {
        use crate::data::{build_vocab, encode_store, RawTriple};
        let train = vec![
            RawTriple::new("a", "r", "b"),
            RawTriple::new("b", "r", "c"),
        ];
        let test = vec![RawTriple::new("a", "r", "c")];
        let vocab = build_vocab(&train, &[], &test);
        let store = encode_store(&vocab, &train, &[], &test).unwrap();
        let report = structure_report(None, &store, None, &vocab.relations, false).unwrap();
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        let g = RelationGraph::from_store(&store, 0, false);
        assert_eq!(row.khs, khs(&g));
        let (max_p, avg_p) = path_stats(&g).unwrap();
        assert_eq!(row.max_path, Some(max_p));
        assert_eq!(row.avg_path, Some(avg_p));
        assert_eq!(row.test_count, 1);
        assert!((row.train_fraction - 1.0).abs() < 1e-12);
        assert!(row.symmetry.is_none());
        assert!(row.vector_norm.is_none());
    }
}
