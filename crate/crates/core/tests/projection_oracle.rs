//! Projection against an independent double-double evaluation of the
//! 4x4 transform and the pinhole model.

use masktext_core::{project_point, CameraFrame, CameraIntrinsics, CameraPose, DepthMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
struct Dd(f64, f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd(p, a.mul_add(b, -p))
}

impl Dd {
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let t = s.1 + self.1 + o.1;
        two_sum(s.0, t)
    }

    fn mul_f(self, b: f64) -> Dd {
        let p = two_prod(self.0, b);
        two_sum(p.0, p.1 + self.1 * b)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.add(o.mul_f(-q1));
        let q2 = r.0 / o.0;
        two_sum(q1, q2)
    }

    fn value(self) -> f64 {
        self.0 + self.1
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let mut q: [f64; 4] = [0.0; 4];
    q.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

#[test]
fn thousand_random_points_match_extended_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (w, h) = (64u32, 48u32);
    let mut visible = 0;
    for _ in 0..1000 {
        let rot = random_rotation(&mut rng);
        let t = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..3.0)];
        let pose = CameraPose::from_rotation_translation(rot, t).unwrap();
        let k = CameraIntrinsics::new(w, h, rng.gen_range(20.0..80.0), rng.gen_range(20.0..80.0), 31.5, 23.5).unwrap();
        let frame = CameraFrame::new("f".into(), k, pose, DepthMap::new(h, w, vec![0.0; (w * h) as usize]).unwrap()).unwrap();
        let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];

        let m = pose.matrix();
        let cam: Vec<Dd> = (0..3)
            .map(|r| {
                (0..3).fold(Dd(m[r * 4 + 3], 0.0), |acc, c| acc.add(two_prod(m[r * 4 + c], p[c])))
            })
            .collect();
        let fast = pose.transform(p);
        for r in 0..3 {
            assert!((fast[r] - cam[r].value()).abs() <= 1e-9);
        }

        let z = cam[2];
        let expect = if z.value() <= 0.0 {
            None
        } else {
            let u = cam[0].div(z).mul_f(k.fx).add(Dd(k.cx, 0.0)).value().round();
            let v = cam[1].div(z).mul_f(k.fy).add(Dd(k.cy, 0.0)).value().round();
            (u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64).then_some((u as u32, v as u32))
        };
        let got = project_point(p, &frame);
        assert_eq!(got.map(|g| (g.u, g.v)), expect, "point {p:?}");
        if let Some(g) = got {
            assert!((g.depth - z.value()).abs() <= 1e-9);
            visible += 1;
        }
    }
    assert!(visible > 100, "only {visible} points landed in frame");
}
