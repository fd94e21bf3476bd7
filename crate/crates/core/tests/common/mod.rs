#![allow(dead_code)]

use polyscale_core::ingest::{apply_coding, read_csv};
use polyscale_core::models::{GrmItemParams, NrmItemParams};
use polyscale_core::{CalibratedItem, CodingScheme, ColumnSpec, ItemParams, ResponseMatrix};

/// Published nominal-model estimates for the three morality items and
/// church attendance, read as slopes and locations.
pub fn survey_nrm_items() -> Vec<CalibratedItem> {
    let rows: [(&str, &[f64], &[f64]); 4] = [
        ("q40a", &[-1.285, -0.519, 0.196, 1.608], &[1.605, 1.602, -1.459, -1.748]),
        ("q40b", &[-1.178, -0.325, 0.696, 0.806], &[1.078, 0.492, -1.315, -0.255]),
        ("q40c", &[-5.328, 0.557, 1.547, 3.224], &[-2.355, 0.66, 0.279, 1.416]),
        (
            "attend",
            &[-0.659, -0.623, -0.391, -0.007, 0.549, 1.132],
            &[-0.268, -0.017, 0.126, 0.103, 0.527, -0.471],
        ),
    ];
    rows.iter()
        .map(|(id, a, d)| {
            let p = NrmItemParams::from_slope_location(a.to_vec(), d.to_vec()).unwrap();
            CalibratedItem::new(*id, (1..=a.len() as i64).collect(), ItemParams::Nrm(p)).unwrap()
        })
        .collect()
}

pub fn grm_item(id: &str, a: f64, d: &[f64]) -> CalibratedItem {
    let cats = (1..=d.len() as i64 + 1).collect();
    CalibratedItem::new(id, cats, ItemParams::Grm(GrmItemParams::new(a, d.to_vec()).unwrap())).unwrap()
}

/// Three 4-category ordered items and one 6-category item.
pub fn ordered_survey_items() -> Vec<CalibratedItem> {
    vec![
        grm_item("q40a", 1.4, &[-1.2, -0.1, 0.9]),
        grm_item("q40b", 1.8, &[-0.9, 0.3, 1.2]),
        grm_item("q40c", 1.1, &[-1.5, -0.4, 0.6]),
        grm_item("attend", 1.0, &[-1.6, -0.8, -0.1, 0.6, 1.4]),
    ]
}

/// Four 4-category items with discriminations spanning [0.8, 2.2].
pub fn recovery_grm_items() -> Vec<CalibratedItem> {
    vec![
        grm_item("i1", 0.8, &[-2.0, -0.5, 1.5]),
        grm_item("i2", 1.2, &[-1.5, -0.3, 0.9]),
        grm_item("i3", 1.7, &[-0.8, 0.2, 1.4]),
        grm_item("i4", 2.2, &[-1.2, 0.0, 1.0]),
    ]
}

/// Identity coding of `m` with codes `a` and `b` exchanged on `items`.
pub fn swap_scheme(m: &ResponseMatrix, items: &[&str], a: i64, b: i64) -> CodingScheme {
    let mut scheme = CodingScheme::identity(m);
    for id in items {
        let coding = scheme.items.get_mut(*id).unwrap();
        for target in coding.map.values_mut() {
            if *target == a {
                *target = b;
            } else if *target == b {
                *target = a;
            }
        }
    }
    scheme
}

/// Applies `scheme` to `m` the way the command line does: write, re-read,
/// recode.
pub fn recode(m: &ResponseMatrix, scheme: &CodingScheme) -> ResponseMatrix {
    let mut buf = Vec::new();
    m.write_csv(&mut buf, "id", Some("weight")).unwrap();
    let spec = ColumnSpec {
        items: m.items().iter().map(|it| it.id.clone()).collect(),
        weight: Some("weight".into()),
        groups: m.groups().iter().map(|g| g.name.clone()).collect(),
        id: Some("id".into()),
    };
    apply_coding(&read_csv(buf.as_slice(), &spec).unwrap(), scheme).unwrap()
}

pub fn item_ids(m: &ResponseMatrix) -> Vec<String> {
    m.items().iter().map(|it| it.id.clone()).collect()
}

/// Four 4-category nominal items with moderate slopes, including one whose
/// slopes are not monotone in the category codes.
pub fn moderate_nrm_items() -> Vec<CalibratedItem> {
    let rows: [(&str, [f64; 4], [f64; 4]); 4] = [
        ("n1", [-1.2, -0.3, 0.4, 1.1], [-0.5, 0.6, 0.4, -0.5]),
        ("n2", [-0.8, 0.9, -0.4, 0.3], [0.2, -0.3, 0.5, -0.4]),
        ("n3", [-1.5, 0.0, 0.5, 1.0], [0.0, 0.5, 0.2, -0.7]),
        ("n4", [1.0, -1.0, 0.3, -0.3], [-0.2, 0.1, 0.4, -0.3]),
    ];
    rows.iter()
        .map(|(id, a, c)| {
            let p = NrmItemParams::new(a.to_vec(), c.to_vec()).unwrap();
            CalibratedItem::new(*id, vec![1, 2, 3, 4], ItemParams::Nrm(p)).unwrap()
        })
        .collect()
}
