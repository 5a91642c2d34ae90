//! Closed tours through a handful of points. Index 0 is always the start
//! (home); tours are returned starting there and implicitly return to it.

pub type Point = (f64, f64);

pub fn distance(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn matrix(points: &[Point]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|a| points.iter().map(|b| distance(*a, *b)).collect())
        .collect()
}

pub fn tour_length(points: &[Point], tour: &[usize]) -> f64 {
    if tour.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..tour.len() {
        total += distance(points[tour[i]], points[tour[(i + 1) % tour.len()]]);
    }
    total
}

/// Exact shortest tour by dynamic programming over subsets.
pub fn held_karp(points: &[Point]) -> (Vec<usize>, f64) {
    let n = points.len();
    if n <= 2 {
        let tour: Vec<usize> = (0..n).collect();
        let len = tour_length(points, &tour);
        return (tour, len);
    }
    let d = matrix(points);
    let m = n - 1; // stops other than home
    let full = 1usize << m;
    let mut cost = vec![f64::INFINITY; full * m];
    let mut parent = vec![usize::MAX; full * m];
    for j in 0..m {
        cost[(1 << j) * m + j] = d[0][j + 1];
    }
    for set in 1..full {
        for j in 0..m {
            if set & (1 << j) == 0 {
                continue;
            }
            let here = cost[set * m + j];
            if !here.is_finite() {
                continue;
            }
            for k in 0..m {
                if set & (1 << k) != 0 {
                    continue;
                }
                let next = set | (1 << k);
                let c = here + d[j + 1][k + 1];
                if c < cost[next * m + k] {
                    cost[next * m + k] = c;
                    parent[next * m + k] = j;
                }
            }
        }
    }
    let last_set = full - 1;
    let mut best = f64::INFINITY;
    let mut last = 0;
    for j in 0..m {
        let c = cost[last_set * m + j] + d[j + 1][0];
        if c < best {
            best = c;
            last = j;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut set = last_set;
    let mut j = last;
    loop {
        order.push(j + 1);
        let p = parent[set * m + j];
        set &= !(1 << j);
        if p == usize::MAX {
            break;
        }
        j = p;
    }
    order.push(0);
    order.reverse();
    (order, best)
}

pub fn nearest_neighbor(points: &[Point]) -> Vec<usize> {
    let n = points.len();
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut current = 0;
    if n == 0 {
        return tour;
    }
    visited[0] = true;
    tour.push(0);
    for _ in 1..n {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, seen) in visited.iter().enumerate() {
            if *seen {
                continue;
            }
            let dj = distance(points[current], points[j]);
            if dj < best_d {
                best_d = dj;
                best = j;
            }
        }
        visited[best] = true;
        tour.push(best);
        current = best;
    }
    tour
}

/// Reverses tour segments while any reversal shortens the tour. Position 0
/// (home) stays in place.
pub fn two_opt(points: &[Point], mut tour: Vec<usize>) -> Vec<usize> {
    let n = tour.len();
    if n < 4 {
        return tour;
    }
    let d = |a: usize, b: usize| distance(points[a], points[b]);
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n - 1 {
            for j in i + 2..n {
                let (a, b) = (tour[i], tour[i + 1]);
                let (c, e) = (tour[j], tour[(j + 1) % n]);
                if a == e {
                    continue;
                }
                let delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
                if delta < -1e-12 {
                    tour[i + 1..=j].reverse();
                    improved = true;
                }
            }
        }
    }
    tour
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Indices of the convex hull in counter-clockwise order (monotone chain);
/// collinear boundary points are left out.
pub fn convex_hull(points: &[Point]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|a, b| {
        points[*a]
            .0
            .total_cmp(&points[*b].0)
            .then(points[*a].1.total_cmp(&points[*b].1))
            .then(a.cmp(b))
    });
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for &i in idx.iter().chain(idx.iter().rev().skip(1)) {
        while hull.len() >= 2
            && cross(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i]) <= 0.0
        {
            hull.pop();
        }
        hull.push(i);
    }
    hull.pop();
    hull
}

/// A hull-following tour: start from the convex hull and insert the
/// remaining points one by one where they lengthen the tour least.
pub fn hull_insertion(points: &[Point]) -> Vec<usize> {
    let n = points.len();
    if n <= 3 {
        return (0..n).collect();
    }
    let mut tour = convex_hull(points);
    let mut inside = vec![false; n];
    for &i in &tour {
        inside[i] = true;
    }
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for p in (0..n).filter(|p| !inside[*p]) {
            for e in 0..tour.len() {
                let a = points[tour[e]];
                let b = points[tour[(e + 1) % tour.len()]];
                let cost = distance(a, points[p]) + distance(points[p], b) - distance(a, b);
                if best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, p, e));
                }
            }
        }
        let Some((_, p, e)) = best else {
            break;
        };
        tour.insert(e + 1, p);
        inside[p] = true;
    }
    let start = tour.iter().position(|i| *i == 0).expect("home is on the tour");
    tour.rotate_left(start);
    tour
}

/// Shortest tour found: exact up to `exact_limit` stops besides home,
/// otherwise the better of 2-opt from nearest neighbour and 2-opt from the
/// hull tour.
pub fn shortest_tour(points: &[Point], exact_limit: usize) -> (Vec<usize>, f64) {
    if points.len() <= exact_limit + 1 {
        return held_karp(points);
    }
    let a = two_opt(points, nearest_neighbor(points));
    let b = two_opt(points, hull_insertion(points));
    let (la, lb) = (tour_length(points, &a), tour_length(points, &b));
    if la <= lb {
        (a, la)
    } else {
        (b, lb)
    }
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return distance(p, a);
    }
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    distance(p, (a.0 + t * dx, a.1 + t * dy))
}

/// Distance from `p` to the closest edge of the closed tour.
pub fn distance_to_tour(p: Point, points: &[Point], tour: &[usize]) -> f64 {
    match tour.len() {
        0 => f64::INFINITY,
        1 => distance(p, points[tour[0]]),
        n => (0..n)
            .map(|i| point_segment_distance(p, points[tour[i]], points[tour[(i + 1) % n]]))
            .fold(f64::INFINITY, f64::min),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_points(seed: u64, n: usize) -> Vec<Point> {
        let mut rng = seeded(seed);
        let mut pts = vec![(0.0, 0.0)];
        pts.extend((0..n).map(|_| (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))));
        pts
    }

    fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permutations(items, k + 1, out);
            items.swap(k, i);
        }
    }

    fn brute_force(points: &[Point]) -> f64 {
        let mut rest: Vec<usize> = (1..points.len()).collect();
        let mut all = Vec::new();
        permutations(&mut rest, 0, &mut all);
        all.into_iter()
            .map(|p| {
                let mut tour = vec![0];
                tour.extend(p);
                tour_length(points, &tour)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn is_tour(tour: &[usize], n: usize) -> bool {
        let mut sorted = tour.to_vec();
        sorted.sort_unstable();
        tour.first() == Some(&0) && sorted == (0..n).collect::<Vec<_>>()
    }

    #[test]
    fn trivial_tours() {
        assert_eq!(held_karp(&[(0.0, 0.0)]).1, 0.0);
        let tri = [(0.0, 0.0), (3.0, 0.0), (0.0, 4.0)];
        assert!((shortest_tour(&tri, 12).1 - 12.0).abs() < 1e-12);
    }

    #[test]
    fn held_karp_matches_enumeration() {
        for seed in 0..40 {
            let pts = random_points(seed, 1 + (seed as usize % 8));
            let (tour, len) = held_karp(&pts);
            assert!(is_tour(&tour, pts.len()));
            assert!((tour_length(&pts, &tour) - len).abs() < 1e-9);
            assert!((len - brute_force(&pts)).abs() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn hull_tour_is_valid_and_close() {
        for seed in 0..100 {
            let pts = random_points(100 + seed, 1 + (seed as usize % 8));
            let tour = hull_insertion(&pts);
            assert!(is_tour(&tour, pts.len()), "{tour:?}");
            let opt = brute_force(&pts);
            let len = tour_length(&pts, &tour);
            assert!(len >= opt - 1e-9);
            assert!(len <= 1.5 * opt + 1e-9, "seed {seed}: {len} vs {opt}");
        }
    }

    #[test]
    fn convex_polygon_visits_in_hull_order() {
        let pts: Vec<Point> = (0..7)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 7.0;
                (a.cos(), a.sin())
            })
            .collect();
        let tour = hull_insertion(&pts);
        assert_eq!(tour, vec![0, 1, 2, 3, 4, 5, 6]);
        assert!((tour_length(&pts, &tour) - held_karp(&pts).1).abs() < 1e-12);
    }

    #[test]
    fn large_sets_beat_or_match_hull_tour() {
        for seed in 0..10 {
            let pts = random_points(500 + seed, 20);
            let (tour, len) = shortest_tour(&pts, 12);
            assert!(is_tour(&tour, pts.len()));
            assert!(len <= tour_length(&pts, &hull_insertion(&pts)) + 1e-12);
        }
    }

    #[test]
    fn segment_distance() {
        assert_eq!(point_segment_distance((1.0, 0.5), (0.0, 0.0), (2.0, 0.0)), 0.5);
        assert_eq!(point_segment_distance((3.0, 0.0), (0.0, 0.0), (2.0, 0.0)), 1.0);
        assert_eq!(distance_to_tour((0.3, 0.4), &[(0.0, 0.0)], &[0]), 0.5);
    }
}
