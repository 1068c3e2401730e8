use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use colloc_core::catalog::{bundled_catalog, select_sensors, SelectionCriteria};
use colloc_core::compliance::{grade_group, grade_unit_values, ThresholdSet};
use colloc_core::data::{align_and_average, AlignedPanel, DeploymentConfig, Interval, SampleRecord};
use colloc_core::metrics::{self, GroupMetricSet, MetricSet, PairedSeries};
use colloc_core::regression::{self, Orientation, RegressionFit, Transform};
use colloc_core::stats;

fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(1.0f64..500.0, n),
            prop::collection::vec(-30.0f64..30.0, n),
            0.2f64..3.0,
            -20.0f64..20.0,
        )
            .prop_map(|(x, noise, m, b)| {
                let y = x.iter().zip(&noise).map(|(x, e)| m * x + b + e).collect();
                (x, y)
            })
    })
}

fn fit_strategy() -> impl Strategy<Value = RegressionFit> {
    (3usize..5000, -5.0f64..5.0, 0.01f64..500.0, 1e-6f64..5.0, -3.0f64..3.0, -3.0f64..3.0).prop_map(
        |(n, x_bar, s_xx, mse, slope, intercept)| {
            RegressionFit::from_summary(Transform::LogLog, Orientation::ReferenceOnSensor, slope, intercept, n, x_bar, s_xx, mse)
                .unwrap()
        },
    )
}

proptest! {
    #[test]
    fn scale_equivariance((x, y) in paired(), c in 0.1f64..10.0) {
        let p = PairedSeries::new(x.clone(), y.clone()).unwrap();
        let q = PairedSeries::new(x.iter().map(|v| v * c).collect(), y.iter().map(|v| v * c).collect()).unwrap();
        let a = MetricSet::compute(&p, &x);
        let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
        let b = MetricSet::compute(&q, &xs);
        let rel = |u: f64, v: f64| (u - v).abs() <= 1e-9 * u.abs().max(v.abs()).max(1.0);
        prop_assert!(rel(b.mae, c * a.mae));
        prop_assert!(rel(b.mbe, c * a.mbe));
        prop_assert!(rel(b.rmse, c * a.rmse));
        prop_assert!(rel(b.slope.unwrap(), a.slope.unwrap()));
        prop_assert!(rel(b.intercept.unwrap(), c * a.intercept.unwrap()));
        prop_assert!(rel(b.r_squared.unwrap(), a.r_squared.unwrap()));
        prop_assert!(rel(b.nrmse_mean.unwrap(), a.nrmse_mean.unwrap()));
        prop_assert!(rel(b.nrmse_range.unwrap(), a.nrmse_range.unwrap()));
    }

    #[test]
    fn metric_ranges((x, y) in paired()) {
        let p = PairedSeries::new(x, y).unwrap();
        let r2 = metrics::r_squared(&p).unwrap();
        prop_assert!((0.0..=1.0).contains(&r2));
        prop_assert!(metrics::mae(&p) <= metrics::rmse_single(&p) + 1e-9);
        prop_assert!(metrics::mbe(&p).abs() <= metrics::mae(&p) + 1e-9);
    }

    #[test]
    fn intervals_nest_and_survive_back_transform(fit in fit_strategy(), dx in -10.0f64..10.0, conf in 0.5f64..0.999) {
        let x_o = fit.x_bar + dx;
        let ci = regression::confidence_interval(&fit, x_o, conf).unwrap();
        let pi = regression::prediction_interval(&fit, x_o, conf).unwrap();
        prop_assert!(pi.lo < ci.lo && ci.hi < pi.hi);
        let e = regression::estimate(&fit, x_o.exp(), conf).unwrap();
        prop_assert!(e.pi_lo <= e.ci_lo && e.ci_lo <= e.point && e.point <= e.ci_hi && e.ci_hi <= e.pi_hi);
    }

    #[test]
    fn wider_confidence_gives_wider_intervals(fit in fit_strategy(), dx in -10.0f64..10.0) {
        let x_o = fit.x_bar + dx;
        let narrow = regression::prediction_interval(&fit, x_o, 0.5).unwrap();
        let wide = regression::prediction_interval(&fit, x_o, 0.95).unwrap();
        prop_assert!(wide.lo < narrow.lo && narrow.hi < wide.hi);
    }

    #[test]
    fn t_quantile_monotone(df in 1.0f64..500.0, conf in 0.5f64..0.99) {
        let t = stats::t_quantile(conf, df).unwrap();
        prop_assert!(stats::t_quantile(conf, df + 1.0).unwrap() < t);
        prop_assert!(stats::t_quantile(conf + 0.005, df).unwrap() > t);
    }

    #[test]
    fn nested_r_squared((x, y) in paired(), rh in prop::collection::vec(20.0f64..95.0, 40)) {
        prop_assume!(x.len() >= 5);
        let rh = &rh[..x.len()];
        match regression::humidity_significance(&x, &y, rh) {
            Ok(r) => {
                prop_assert!(r.lcs_plus_rh.r_squared >= r.lcs_only.r_squared);
                prop_assert!((0.0..=1.0).contains(&r.p_value_rh));
                prop_assert_eq!(r.significant, r.p_value_rh <= 0.05);
            }
            Err(colloc_core::Error::Collinear(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn loosening_thresholds_never_fails_more(
        r2 in 0.0f64..1.0, slope in 0.0f64..3.0, b in -50.0f64..50.0,
        rmse in 0.0f64..50.0, nrmse in 0.0f64..100.0, sd in 0.0f64..20.0, cv in 0.0f64..60.0,
        loosen in 0.0f64..5.0,
    ) {
        let tight = ThresholdSet::default();
        let loose = ThresholdSet {
            r2_min: tight.r2_min - loosen / 10.0,
            intercept_abs_max: tight.intercept_abs_max + loosen,
            slope_lo: tight.slope_lo - loosen / 10.0,
            slope_hi: tight.slope_hi + loosen / 10.0,
            rmse_max: tight.rmse_max + loosen,
            nrmse_max: tight.nrmse_max + loosen,
            sd_max: tight.sd_max + loosen,
            cv_max: tight.cv_max + loosen,
        };
        let u = |t: &ThresholdSet| grade_unit_values("u", "g", Some(r2), Some(slope), Some(b), Some(rmse), t);
        let g = GroupMetricSet {
            n_units: 3, n_cells: 1, n_periods: 1,
            rmse_group: Some(rmse), sd: Some(sd), cv: Some(cv),
            nrmse_group_mean: Some(nrmse), nrmse_group_range: Some(nrmse),
        };
        let (ut, ul) = (u(&tight), u(&loose));
        prop_assert!(!ut.overall || ul.overall);
        for (a, c) in [(ut.r_squared, ul.r_squared), (ut.slope, ul.slope), (ut.intercept, ul.intercept), (ut.rmse, ul.rmse)] {
            prop_assert!(!a.verdict.passed() || c.verdict.passed());
        }
        let (gt, gl) = (grade_group("g", &g, &tight), grade_group("g", &g, &loose));
        prop_assert!(!gt.overall || gl.overall);
        prop_assert!(!gt.rmse_or_nrmse.passed() || gl.rmse_or_nrmse.passed());
    }

    #[test]
    fn catalog_selection_partitions_and_is_monotone(
        fan in any::<bool>(), laser in any::<bool>(),
        pm in prop::option::of(100.0f64..20000.0), rh in prop::option::of(50.0f64..100.0),
        price in prop::option::of(1.0f64..500.0),
    ) {
        let catalog = bundled_catalog();
        let criteria = SelectionCriteria {
            require_fan: fan, require_laser: laser,
            min_pm_range: pm, min_rh_upper: rh, max_price_usd: price,
            price_exceptions: Vec::new(),
        };
        let s = select_sensors(&catalog, &criteria).unwrap();
        prop_assert_eq!(s.selected.len() + s.rejected.len(), catalog.len());
        for r in &s.rejected {
            prop_assert!(!r.failures.is_empty());
            prop_assert!(!s.selected.iter().any(|x| x.model == r.sensor.model));
        }
        let stricter = SelectionCriteria { require_fan: true, ..criteria.clone() };
        let t = select_sensors(&catalog, &stricter).unwrap();
        prop_assert!(t.selected.iter().all(|x| s.selected.contains(x)));
    }

    #[test]
    fn hourly_mean_lies_within_its_samples(values in prop::collection::vec(prop::option::of(0.0f64..900.0), 4 * 6)) {
        let mut groups = BTreeMap::new();
        groups.insert("g".to_string(), vec!["u".to_string()]);
        let config = DeploymentConfig::new("ref", groups);
        let t0 = Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap();
        let mut records = Vec::new();
        for (k, v) in values.iter().enumerate() {
            let timestamp = t0 + chrono::Duration::minutes(15 * k as i64);
            records.push(SampleRecord { timestamp, device_id: "ref".into(), pm25: 10.0, temperature: None, humidity: None });
            if let Some(v) = v {
                records.push(SampleRecord { timestamp, device_id: "u".into(), pm25: *v, temperature: None, humidity: None });
            }
        }
        prop_assume!(values.iter().any(Option::is_some));
        let panel = align_and_average(&records, &config, Interval::Hourly).unwrap();
        let column = panel.column("u").unwrap();
        for (h, cell) in column.iter().enumerate() {
            let samples: Vec<f64> = values[4 * h..4 * h + 4].iter().flatten().copied().collect();
            match cell {
                Some(mean) => {
                    prop_assert!(samples.len() >= 3);
                    let lo = samples.iter().copied().fold(f64::MAX, f64::min);
                    let hi = samples.iter().copied().fold(f64::MIN, f64::max);
                    prop_assert!(*mean >= lo && *mean <= hi);
                }
                None => prop_assert!(samples.len() < 3),
            }
        }
    }
}

#[test]
fn group_reductions() {
    let t0 = Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap();
    let reference = vec![Some(10.0), Some(20.0), None, Some(40.0)];
    let unit = vec![Some(12.0), Some(18.0), Some(30.0), Some(47.0)];
    let panel = AlignedPanel::new(
        Interval::Daily,
        "ref",
        0,
        t0,
        vec![("ref".into(), reference), ("a".into(), unit.clone()), ("b".into(), unit)],
        vec![None; 4],
        vec![None; 4],
    )
    .unwrap();
    let single = metrics::rmse_single(&PairedSeries::from_panel(&panel, "a").unwrap());
    assert!((metrics::rmse_group(&panel, &["a".into()]).unwrap() - single).abs() < 1e-12);
    assert_eq!(metrics::group_sd_cv(&panel, &["a".into(), "b".into()]).unwrap(), (0.0, 0.0));
}
