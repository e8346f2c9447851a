use std::path::Path;

use acgn_sim::*;

fn blocks() -> Simulator {
    Simulator::for_env(EnvKind::Blocks, 64)
}

fn kitchen() -> Simulator {
    Simulator::for_env(EnvKind::Kitchen, 64)
}

fn find_seed(sim: &Simulator, n: usize, pred: impl Fn(&Scene) -> bool) -> (u64, Scene) {
    (0..10_000)
        .find_map(|s| {
            let scene = sim.init_scene(s, n).ok()?;
            pred(&scene).then_some((s, scene))
        })
        .expect("no seed satisfies the predicate")
}

#[test]
fn init_is_deterministic() {
    let sim = blocks();
    assert_eq!(sim.init_scene(7, 4).unwrap(), sim.init_scene(7, 4).unwrap());
}

#[test]
fn init_objects_are_distinct() {
    let scene = blocks().init_scene(7, 4).unwrap();
    assert_eq!(scene.objects.len(), 4);
    let mut pairs: Vec<_> = scene.objects.iter().map(|o| (o.kind, o.color)).collect();
    pairs.sort();
    pairs.dedup();
    assert_eq!(pairs.len(), 4);
}

#[test]
fn kitchen_extents_inside_canvas() {
    let scene = kitchen().init_scene(3, 4).unwrap();
    assert_eq!(scene.objects.iter().filter(|o| o.openable).count(), 2);
    assert_eq!(scene.objects.iter().filter(|o| !o.openable).count(), 2);
    for o in &scene.objects {
        let (x, y) = o.position;
        let (w, h) = o.size;
        for (cx, cy) in [
            (x - w / 2.0, y - h / 2.0),
            (x + w / 2.0, y + h / 2.0),
            (x - w / 2.0, y + h / 2.0),
            (x + w / 2.0, y - h / 2.0),
        ] {
            assert!(
                (0.0..=64.0).contains(&cx) && (0.0..=64.0).contains(&cy),
                "{o:?}"
            );
        }
    }
    for o in scene.objects.iter().filter(|o| o.openable) {
        assert_eq!(o.position.1 + o.size.1 / 2.0, WALL_LINE);
    }
}

#[test]
fn object_count_limits() {
    assert!(matches!(
        blocks().init_scene(1, 3),
        Err(SimError::ObjectCount { .. })
    ));
    assert!(matches!(
        kitchen().init_scene(1, 6),
        Err(SimError::ObjectCount { .. })
    ));
}

#[test]
fn held_scene_offers_only_puts() {
    let sim = blocks();
    let scene = sim.init_scene(7, 4).unwrap();
    let pick = ActionCommand::unary(Verb::Pick, scene.objects[0].reference());
    let (scenes, _) = sim.step_action(&scene, &pick).unwrap();
    let held = scenes.last().unwrap();
    assert_eq!(held.held, vec![scene.objects[0].id]);
    let menu = sim.enumerate_valid_actions(held);
    assert!(!menu.is_empty());
    assert!(menu.iter().all(|c| c.verb == Verb::Put));
}

#[test]
fn fresh_blocks_menu_has_every_pick() {
    let sim = blocks();
    let scene = sim.init_scene(7, 4).unwrap();
    let menu = sim.enumerate_valid_actions(&scene);
    let mut expected = Vec::new();
    for o in &scene.objects {
        expected.push(ActionCommand::unary(Verb::Pick, o.reference()));
        expected.push(ActionCommand::unary(Verb::PickRotate, o.reference()));
    }
    assert_eq!(menu, expected);
}

#[test]
fn closed_fridge_can_only_open() {
    let sim = kitchen();
    let (_, scene) = find_seed(&sim, 3, |s| {
        s.objects.iter().any(|o| o.kind == ObjectKind::Fridge)
    });
    let fridge = scene
        .objects
        .iter()
        .find(|o| o.kind == ObjectKind::Fridge)
        .unwrap()
        .reference();
    let menu = sim.enumerate_valid_actions(&scene);
    assert!(menu.contains(&ActionCommand::unary(Verb::Open, fridge)));
    assert!(!menu.contains(&ActionCommand::unary(Verb::Close, fridge)));
}

#[test]
fn put_left_of_formula() {
    let sim = blocks();
    let scene = sim.init_scene(11, 4).unwrap();
    let (a, b) = (&scene.objects[0], &scene.objects[1]);
    let pick = ActionCommand::unary(Verb::Pick, a.reference());
    let held = sim.step_action(&scene, &pick).unwrap().0.pop().unwrap();
    let put = ActionCommand::relational(Verb::Put, a.reference(), Relation::LeftOf, b.reference());
    match sim.step_action(&held, &put) {
        Ok((scenes, labels)) => {
            let end = scenes.last().unwrap().object(a.id).unwrap();
            assert_eq!(
                end.position.0,
                b.position.0 - (b.size.0 + a.size.0) / 2.0 - 2.0
            );
            assert_eq!(end.position.1, b.position.1);
            assert!(labels.iter().all(|l| *l == put));
        }
        Err(SimError::Precondition { .. }) => {
            // Blocked target: the formula still defines where it would go.
            let (x, _) = placement(a, b, Relation::LeftOf);
            assert_eq!(x, b.position.0 - (b.size.0 + a.size.0) / 2.0 - 2.0);
        }
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn open_sweeps_monotonically() {
    let sim = kitchen();
    let (_, scene) = find_seed(&sim, 3, |s| {
        s.objects.iter().any(|o| o.kind == ObjectKind::Oven)
    });
    let oven = scene
        .objects
        .iter()
        .find(|o| o.kind == ObjectKind::Oven)
        .unwrap();
    assert_eq!(oven.open_fraction, 0.0);
    let (scenes, _) = sim
        .step_action(&scene, &ActionCommand::unary(Verb::Open, oven.reference()))
        .unwrap();
    assert_eq!(scenes.len(), 10);
    let f: Vec<f64> = scenes
        .iter()
        .map(|s| s.object(oven.id).unwrap().open_fraction)
        .collect();
    assert!(f.windows(2).all(|w| w[1] > w[0]), "{f:?}");
    assert_eq!(*f.last().unwrap(), 1.0);
}

#[test]
fn stacking_replay_equals_direct_placement() {
    let sim = blocks();
    for seed in 0..20 {
        let scene = sim.init_scene(seed, 5).unwrap();
        let (a, b) = (scene.objects[0].clone(), scene.objects[1].clone());
        let held = sim
            .step_action(&scene, &ActionCommand::unary(Verb::Pick, a.reference()))
            .unwrap()
            .0
            .pop()
            .unwrap();
        let put =
            ActionCommand::relational(Verb::Put, a.reference(), Relation::OnTop, b.reference());
        let Ok((mut scenes, _)) = sim.step_action(&held, &put) else {
            continue;
        };
        let replayed = scenes.pop().unwrap();
        let mut direct = scene.clone();
        let top = direct.max_z();
        let o = direct.object_mut(a.id).unwrap();
        o.position = (b.position.0, b.position.1 - b.size.1 / 2.0);
        o.resting_on = Some(b.id);
        o.z = top + 1;
        assert_eq!(replayed, direct, "seed {seed}");
        return;
    }
    panic!("no seed admitted a stack");
}

#[test]
fn invalid_command_names_rule() {
    let sim = blocks();
    let scene = sim.init_scene(7, 4).unwrap();
    let a = scene.objects[0].reference();
    let b = scene.objects[1].reference();
    let err = sim
        .step_action(
            &scene,
            &ActionCommand::relational(Verb::Put, a, Relation::OnTop, b),
        )
        .unwrap_err();
    assert!(err.to_string().contains("held"), "{err}");
}

#[test]
fn render_is_deterministic_and_uses_palette() {
    let sim = blocks();
    let scene = Scene {
        env_kind: EnvKind::Blocks,
        canvas: (64, 64),
        objects: vec![ObjectSpec {
            id: 0,
            kind: ObjectKind::Square,
            color: Color::Red,
            position: (31.0, 17.0),
            size: (10.0, 10.0),
            z: 0,
            rotation: 0.0,
            openable: false,
            open_fraction: 0.0,
            contained_in: None,
            resting_on: None,
        }],
        held: vec![],
    };
    let a = sim.render(&scene);
    let b = sim.render(&scene);
    assert_eq!(a.frame, b.frame);
    assert_eq!(a.frame.pixel(31, 17), [230, 50, 50]);
    assert!(a.frame.to_chw().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn closed_door_hides_contents() {
    let sim = kitchen();
    let (_, mut scene) = find_seed(&sim, 3, |s| {
        s.objects.iter().any(|o| o.contained_in.is_some())
    });
    let item = scene
        .objects
        .iter()
        .find(|o| o.contained_in.is_some())
        .unwrap()
        .clone();
    let host = item.contained_in.unwrap();
    // Make colours distinct so the check is meaningful.
    let other = [Color::Red, Color::Green, Color::Blue, Color::Yellow]
        .into_iter()
        .find(|c| *c != item.color)
        .unwrap();
    let host_obj = scene.object_mut(host).unwrap();
    host_obj.color = other;
    let hb = host_obj.extent();
    let r = sim.render(&scene);
    let rgb = item.color.rgb();
    for y in hb.1 as u32..hb.3 as u32 {
        for x in hb.0 as u32..hb.2 as u32 {
            assert_ne!(r.frame.pixel(x, y), rgb);
        }
    }
    assert!(!r.boxes.contains_key(&item.id));
    scene.object_mut(host).unwrap().open_fraction = 1.0;
    assert!(sim.render(&scene).boxes.contains_key(&item.id));
}

#[test]
fn noop_encoding_and_one_hots() {
    let vocab = Vocabulary::for_env(EnvKind::Blocks);
    let e = vocab.encode(&ActionCommand::noop()).unwrap();
    assert_eq!(vocab.clauses[0].words[e.indices[0]], "noop");
    assert!(vocab
        .clauses
        .iter()
        .zip(&e.indices)
        .skip(1)
        .all(|(c, &i)| c.words[i] == NONE));
    let cmd = ActionCommand::relational(
        Verb::Put,
        ObjectRef::new(ObjectKind::Square, Color::Red),
        Relation::OnTop,
        ObjectRef::new(ObjectKind::Circle, Color::Blue),
    );
    let hots = vocab.one_hots(&vocab.encode(&cmd).unwrap());
    assert_eq!(hots.len(), 6);
    for h in hots {
        assert_eq!(h.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(h.iter().sum::<f32>(), 1.0);
    }
}

#[test]
fn encoding_round_trips_over_menus() {
    for sim in [blocks(), kitchen()] {
        let vocab = Vocabulary::for_spec(&sim.spec);
        let ep = sim.generate_episode(5, None).unwrap();
        let mut cmds: Vec<ActionCommand> = ep
            .scenes
            .iter()
            .step_by(sim.t_act())
            .flat_map(|s| sim.enumerate_valid_actions(s))
            .collect();
        cmds.push(ActionCommand::noop());
        for c in cmds {
            assert_eq!(vocab.decode(&vocab.encode(&c).unwrap()).unwrap(), c);
        }
    }
}

#[test]
fn blocks_template_shape() {
    let ep = blocks().generate_episode(1, None).unwrap();
    assert_eq!(ep.len(), 72);
    assert_eq!(ep.labels.len(), 72);
    assert_eq!(ep.boxes.len(), 72);
    assert_eq!(ep.segments.len(), 6);
    let verbs: Vec<Verb> = ep.segments.iter().map(|s| s.commands[0].verb).collect();
    for (i, v) in verbs.iter().enumerate() {
        if i % 2 == 0 {
            assert!(matches!(v, Verb::Pick | Verb::PickRotate));
        } else {
            assert_eq!(*v, Verb::Put);
        }
    }
}

#[test]
fn kitchen_open_take_close_script() {
    let sim = kitchen();
    for seed in 0..500 {
        let scene = sim.episode_scene(seed).unwrap();
        let Some(item) = scene.objects.iter().find(|o| o.contained_in.is_some()) else {
            continue;
        };
        let host = scene
            .object(item.contained_in.unwrap())
            .unwrap()
            .reference();
        let script = [
            ActionCommand::unary(Verb::Open, host),
            ActionCommand::relational(Verb::Take, item.reference(), Relation::In, host),
            ActionCommand::unary(Verb::Close, host),
        ];
        let ep = sim.generate_episode(seed, Some(&script)).unwrap();
        let verbs: Vec<Verb> = ep.segments.iter().map(|s| s.commands[0].verb).collect();
        assert_eq!(verbs, [Verb::Open, Verb::Take, Verb::Close]);
        assert_eq!(ep.len(), 30);
        return;
    }
    panic!("no seed with a contained object");
}

fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn episode_directories_are_byte_identical() {
    let sim = blocks();
    let vocab = Vocabulary::for_env(EnvKind::Blocks);
    let tmp = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let ep = sim.generate_episode(42, None).unwrap();
        dataset::write_episode(&tmp.path().join(name), &ep, &vocab, 64).unwrap();
    }
    assert_eq!(
        dir_bytes(&tmp.path().join("a")),
        dir_bytes(&tmp.path().join("b"))
    );
}

#[test]
fn concurrent_open_and_take_from_floor() {
    let sim = kitchen();
    let (seed, scene) = find_seed(&sim, 3, |s| {
        s.objects.iter().any(|o| o.kind == ObjectKind::Fridge)
            && s.objects.iter().any(|o| {
                o.kind == ObjectKind::Bottle && o.resting_on.is_none() && o.contained_in.is_none()
            })
    });
    let fridge = scene
        .objects
        .iter()
        .find(|o| o.kind == ObjectKind::Fridge)
        .unwrap();
    let bottle = scene
        .objects
        .iter()
        .find(|o| o.kind == ObjectKind::Bottle)
        .unwrap();
    let cmds = [
        ActionCommand::unary(Verb::Open, fridge.reference()),
        ActionCommand::unary(Verb::Take, bottle.reference()),
    ];
    let ep = sim.play(seed, &scene, &[cmds.to_vec()]).unwrap();
    let last = ep.scenes.last().unwrap();
    assert_eq!(last.object(fridge.id).unwrap().open_fraction, 1.0);
    assert!(last.is_held(bottle.id));
    assert!(!ep.boxes.last().unwrap().contains_key(&bottle.id));
    assert!(ep.labels.iter().all(|l| l.as_slice() == cmds));
}

#[test]
fn concurrent_noop_is_neutral() {
    let sim = blocks();
    let scene = sim.episode_scene(9).unwrap();
    let cmd = ActionCommand::unary(Verb::PickRotate, scene.objects[2].reference());
    let alone = sim.generate_episode(9, Some(&[cmd])).unwrap();
    let paired = sim
        .generate_concurrent_episode(9, &[cmd, ActionCommand::noop()])
        .unwrap();
    assert_eq!(alone.frames, paired.frames);
}

#[test]
fn concurrent_puts_match_sequential() {
    let sim = blocks();
    let mut checked = 0;
    for seed in 0..50u64 {
        let scene = sim.init_scene(seed, 6).unwrap();
        let (a, b) = (scene.objects[0].reference(), scene.objects[1].reference());
        let (c, d) = (scene.objects[2].reference(), scene.objects[3].reference());
        let picks = vec![
            ActionCommand::unary(Verb::Pick, a),
            ActionCommand::unary(Verb::Pick, b),
        ];
        let held = sim.step_concurrent(&scene, &picks).unwrap().pop().unwrap();
        assert_eq!(held.held.len(), 2);
        let pa = ActionCommand::relational(Verb::Put, a, Relation::RightOf, c);
        let pb = ActionCommand::relational(Verb::Put, b, Relation::Front, d);
        let Ok(mut conc) = sim.step_concurrent(&held, &[pa, pb]) else {
            continue;
        };
        let mid = sim.step_action(&held, &pa).unwrap().0.pop().unwrap();
        let seq = sim.step_action(&mid, &pb).unwrap().0.pop().unwrap();
        assert_eq!(conc.pop().unwrap(), seq, "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 3, "only {checked} seeds admitted both puts");
}

#[test]
fn concurrent_overlap_is_a_conflict() {
    let sim = blocks();
    let scene = sim.init_scene(3, 4).unwrap();
    let a = scene.objects[0].reference();
    let cmds = [
        ActionCommand::unary(Verb::Pick, a),
        ActionCommand::unary(Verb::PickRotate, a),
    ];
    assert!(matches!(
        sim.step_concurrent(&scene, &cmds),
        Err(SimError::Conflict { .. })
    ));
}

#[test]
fn dataset_split_and_digest() {
    assert_eq!(
        {
            let s = Splits::by_index(500);
            (s.train.len(), s.validation.len(), s.test.len())
        },
        (400, 50, 50)
    );
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = DatasetConfig::new(EnvKind::Blocks, 10, 7, tmp.path().join("d"));
    let m = generate_dataset(&cfg).unwrap();
    assert_eq!(m.episodes.len(), 10);
    assert_eq!(
        (
            m.splits.train.len(),
            m.splits.validation.len(),
            m.splits.test.len()
        ),
        (8, 1, 1)
    );
    let d1 = manifest_digest(&cfg.out).unwrap();
    assert!(matches!(
        generate_dataset(&cfg),
        Err(SimError::OutputExists(_))
    ));
    cfg.overwrite = true;
    generate_dataset(&cfg).unwrap();
    assert_eq!(manifest_digest(&cfg.out).unwrap(), d1);
    let ds = Dataset::open(&cfg.out).unwrap();
    for i in 0..ds.len() {
        let em = ds.episode_manifest(i).unwrap();
        assert_eq!(em.frames.len(), 72);
        assert_eq!(ds.manifest.episodes[i].frames, 72);
    }
    let ep = ds.load_episode(3).unwrap();
    let fresh = Simulator::for_env(EnvKind::Blocks, 64)
        .generate_episode(ds.manifest.episodes[3].seed, None)
        .unwrap();
    assert_eq!(ep, fresh);
}
