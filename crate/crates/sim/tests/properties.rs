use acgn_sim::*;
use proptest::prelude::*;

fn sim(kind: EnvKind) -> Simulator {
    Simulator::for_env(kind, 64)
}

fn env() -> impl Strategy<Value = EnvKind> {
    prop_oneof![Just(EnvKind::Blocks), Just(EnvKind::Kitchen)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), kind in env()) {
        let s = sim(kind);
        let a = s.generate_episode(seed, None).unwrap();
        let b = s.generate_episode(seed, None).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn labels_are_piecewise_constant(seed in any::<u64>(), kind in env()) {
        let s = sim(kind);
        let ep = s.generate_episode(seed, None).unwrap();
        prop_assert_eq!(ep.len(), ep.labels.len());
        prop_assert_eq!(ep.len(), ep.boxes.len());
        prop_assert_eq!(ep.len(), ep.segments.len() * s.t_act());
        for (i, seg) in ep.segments.iter().enumerate() {
            prop_assert_eq!(seg.start, i * s.t_act());
            prop_assert_eq!(seg.len, s.t_act());
            for t in seg.start..seg.start + seg.len {
                prop_assert_eq!(&ep.labels[t], &seg.commands);
            }
        }
    }

    #[test]
    fn only_acted_objects_change_within_a_segment(seed in any::<u64>(), kind in env()) {
        let s = sim(kind);
        let ep = s.generate_episode(seed, None).unwrap();
        for seg in &ep.segments {
            let subjects: Vec<u32> = seg
                .commands
                .iter()
                .filter_map(|c| ep.scenes[seg.start].find(c.subject?).map(|o| o.id))
                .collect();
            for t in seg.start..seg.start + seg.len - 1 {
                let (a, b) = (&ep.scenes[t], &ep.scenes[t + 1]);
                for (x, y) in a.objects.iter().zip(&b.objects) {
                    if subjects.contains(&x.id) {
                        let mut y2 = y.clone();
                        y2.position = x.position;
                        y2.rotation = x.rotation;
                        y2.open_fraction = x.open_fraction;
                        prop_assert_eq!(x, &y2);
                    } else {
                        prop_assert_eq!(x, y);
                    }
                }
            }
        }
    }

    #[test]
    fn boxes_are_tight(seed in any::<u64>(), kind in env()) {
        let s = sim(kind);
        let ep = s.generate_episode(seed, None).unwrap();
        for scene in ep.scenes.iter().step_by(3) {
            let r = s.render(scene);
            for (&id, b) in &r.boxes {
                let has = |x: u32, y: u32| r.id_at(x, y) == Some(id);
                prop_assert!((b.x_min..=b.x_max).any(|x| has(x, b.y_min)));
                prop_assert!((b.x_min..=b.x_max).any(|x| has(x, b.y_max)));
                prop_assert!((b.y_min..=b.y_max).any(|y| has(b.x_min, y)));
                prop_assert!((b.y_min..=b.y_max).any(|y| has(b.x_max, y)));
                for y in 0..64 {
                    for x in 0..64 {
                        if has(x, y) {
                            prop_assert!(b.x_min <= x && x <= b.x_max && b.y_min <= y && y <= b.y_max);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn step_end_renders_segment_end(seed in any::<u64>(), kind in env()) {
        let s = sim(kind);
        let ep = s.generate_episode(seed, None).unwrap();
        let mut cur = ep.initial.clone();
        for seg in &ep.segments {
            let (scenes, _) = s.step_action(&cur, &seg.commands[0]).unwrap();
            let last = scenes.last().unwrap().clone();
            prop_assert_eq!(&s.render(&last).frame, &ep.frames[seg.start + seg.len - 1]);
            cur = last;
        }
    }

    #[test]
    fn every_scene_is_valid(seed in any::<u64>(), kind in env()) {
        let ep = sim(kind).generate_episode(seed, None).unwrap();
        for sc in &ep.scenes {
            prop_assert_eq!(sc.validate(), Ok(()));
        }
    }
}
