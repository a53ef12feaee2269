use ugibbs::disktree::*;
use ugibbs::systems::*;

fn main() {
    let sys = SmoothSystem::from_id("cat2_perturbed:eps=0.1").unwrap();
    let cfg = TreeConfig { epsilon: 0.05, p: 1, ..TreeConfig::default() };
    let x0 = TorusPoint::new(vec![0.31, 0.47]);
    let dirs = unstable_directions(&sys, &x0, 1, 60);
    let base = affine_disk(&x0, &dirs, cfg.epsilon);
    let tree = grow_tree(&sys, base, &cfg, 4).unwrap();
    println!("nodes: {}", tree.nodes.len());
    let mut worst = (0.0f64, 0u32, 0u32);
    for node in &tree.nodes {
        if node.level == 0 { continue; }
        for chart in &node.charts {
            for ell in 0..=node.level {
                let ev = Evaluator::new(&sys, tree.cfg.p, tree.base.clone(), chart.cell.clone(), ell, tree.cfg.grid_per_axis);
                let pre = ev.eval(&chart.cell);
                let allowed = tree.cfg.epsilon * ((ell as f64) - (node.level as f64)).exp2();
                let ratio = pre.grid.diameter() / allowed;
                if ratio > worst.0 { worst = (ratio, node.level, ell); println!("ratio {ratio:.3} at L={} ell={} depth={} diam={:.5}", node.level, ell, chart.cell.depth, pre.grid.diameter()); }
            }
        }
    }
    println!("worst {worst:?}");
}
