use bridgeless_core::clients::{encode_target, parse_deposit_memo, AssetRegistry, ChainClient, ChainClients};
use bridgeless_core::ledger::{BurnEmitChain, Chain, EvmChain, Ledgers, TxIn, TxOut, UtxoChain, UtxoTx};
use bridgeless_core::model::{ChainKind, DepositData, DepositIdentifier, Hash32, ProtocolParams, RequestStatus};
use bridgeless_core::sim::{OutcomeKind, Simulation};
use bridgeless_core::tss::{OracleTss, ThresholdSigner};
use bridgeless_core::validator::{AdversaryFlags, QueryError, SessionMode};

const EVM: &str = "evm-sim";
const BTC: &str = "btc-sim";
const ZANO: &str = "zano-sim";
const WBTC: &str = "0x00000000000000000000000000000000000000b7";
const EVM_BRIDGE: &str = "0x00000000000000000000000000000000000b1d6e";
const ALICE: &str = "0x000000000000000000000000000000000000a11c";

fn build(n: usize, flags: Vec<AdversaryFlags>, log: bool) -> Simulation {
    let params = ProtocolParams::new(n);
    let tss = OracleTss::new("group", [3; 32], params.t);
    let gk = tss.group_key().clone();
    let mut ledgers = Ledgers::new();
    let mut evm = EvmChain::new(EVM, EVM_BRIDGE, gk.clone());
    evm.credit_native(ALICE, 1_000);
    evm.credit_token(WBTC, EVM_BRIDGE, 1_000);
    ledgers.insert(Chain::Evm(evm));
    let mut btc = UtxoChain::new(BTC, "bc1bridge", gk.clone());
    btc.fund("bc1bridge", 500);
    btc.fund("bc1bridge", 300);
    ledgers.insert(Chain::Utxo(btc));
    let mut zano = BurnEmitChain::new(ZANO, gk);
    zano.mint_genesis("zBTC", "ZxCarol", 1_000);
    ledgers.insert(Chain::BurnEmit(zano));

    let mut assets = AssetRegistry::new();
    assets.add("BTC", BTC, "").add("BTC", EVM, WBTC).add("BTC", ZANO, "zBTC");
    assets.add("ETH", EVM, "").add("ETH", ZANO, "zETH");
    let mut clients = ChainClients::new(assets);
    clients.insert(ChainClient::new(EVM, ChainKind::Evm, EVM_BRIDGE));
    clients.insert(ChainClient::new(BTC, ChainKind::Utxo, "bc1bridge"));
    clients.insert(ChainClient::new(ZANO, ChainKind::BurnEmit, "ZxBridge"));
    Simulation::new(params, SessionMode::Protocol, ledgers, tss, clients, flags, 5, log).unwrap()
}

fn honest(n: usize) -> Vec<AdversaryFlags> {
    vec![AdversaryFlags::default(); n]
}

fn eth_to_zano(sim: &mut Simulation, amount: u64) -> DepositIdentifier {
    let evm = sim.ledgers.evm_mut(&EVM.into()).unwrap();
    let h = evm.deposit_native(ALICE, amount, &ZANO.into(), "ZxBob").unwrap();
    DepositIdentifier::new(EVM, h, 0)
}

#[test]
fn evm_to_zano_finalizes_in_first_session() {
    let mut sim = build(4, honest(4), false);
    let id = eth_to_zano(&mut sim, 70);
    sim.submit_withdrawal(2, &id).unwrap();
    assert_eq!(sim.check_withdrawal(2, &id).unwrap().status, RequestStatus::Invalid);
    let out = sim.run_session();
    assert_eq!(out.sid, 0);
    assert_eq!(out.kind, OutcomeKind::Finalized(id.clone()));
    assert_eq!(out.committee.as_ref().unwrap().len(), 2);
    assert!(out.statuses.iter().all(|s| *s == Some(RequestStatus::Finalized)));
    let zano = sim.ledgers.burn_emit(&ZANO.into()).unwrap();
    assert_eq!(zano.balance("zETH", "ZxBob"), 70);
    let emits: Vec<_> = zano.emits().collect();
    assert_eq!(emits.len(), 1);
    assert_eq!(parse_deposit_memo(&emits[0].1.memo).unwrap(), id);
    let req = sim.check_withdrawal(0, &id).unwrap();
    assert_eq!(req.withdrawal_data.withdrawal_tx_id, Some(emits[0].0));
}

#[test]
fn btc_to_evm_and_zano_to_btc() {
    let mut sim = build(7, honest(7), false);
    let chain = sim.ledgers.utxo_mut(&BTC.into()).unwrap();
    let funding = chain.fund("bc1alice", 90);
    let tx = UtxoTx {
        inputs: vec![TxIn { prevout: funding, prev_address: "bc1alice".into(), witness: vec![] }],
        outputs: vec![TxOut::pay("bc1bridge", 90), TxOut::op_return(encode_target(&EVM.into(), ALICE).unwrap())],
        memo: vec![],
    };
    let btc_id = DepositIdentifier::new(BTC, chain.submit_tx(tx).unwrap(), 0);
    let zano = sim.ledgers.burn_emit_mut(&ZANO.into()).unwrap();
    let entry = encode_target(&BTC.into(), "bc1dave").unwrap();
    let burn = zano.submit_burn("ZxCarol", "zBTC", 650, vec![entry]).unwrap();
    let zano_id = DepositIdentifier::new(ZANO, burn, 0);
    sim.submit_withdrawal(0, &btc_id).unwrap();
    sim.submit_withdrawal(5, &zano_id).unwrap();
    let mut done = Vec::new();
    for _ in 0..4 {
        if let OutcomeKind::Finalized(id) = sim.run_session().kind {
            done.push(id);
        }
    }
    assert_eq!(done, vec![btc_id.clone(), zano_id.clone()]);
    let evm = sim.ledgers.evm(&EVM.into()).unwrap();
    assert_eq!(evm.token_balance(WBTC, ALICE), 90);
    let btc = sim.ledgers.utxo(&BTC.into()).unwrap();
    assert_eq!(btc.balance("bc1dave"), 650);
    assert_eq!(btc.balance("bc1bridge"), 90 + 800 - 650);
    let wtx = sim.check_withdrawal(3, &zano_id).unwrap().withdrawal_data.withdrawal_tx_id.unwrap();
    let view = btc.get_transaction(&wtx).unwrap();
    assert_eq!(parse_deposit_memo(&view.tx.memo).unwrap(), zano_id);
}

#[test]
fn crashed_proposer_delays_by_one_session() {
    let mut flags = honest(4);
    flags[0].crashed_proposer = true;
    let mut sim = build(4, flags, false);
    let id = eth_to_zano(&mut sim, 5);
    sim.submit_withdrawal(1, &id).unwrap();
    assert_eq!(sim.run_session().kind, OutcomeKind::NoProposal);
    let out = sim.run_session();
    assert_eq!(out.proposer, 1);
    assert_eq!(out.kind, OutcomeKind::Finalized(id.clone()));
    // The crashed validator never heard of the request.
    assert_eq!(out.statuses[0], None);
    assert_eq!(sim.check_withdrawal(0, &id), Err(QueryError::NotFound));
}

#[test]
fn silent_signer_in_committee_fails_signing() {
    let mut flags = honest(4);
    for f in &mut flags[1..] {
        f.silent_signer = true;
    }
    flags[3].silent_signer = false;
    let mut sim = build(4, flags, false);
    let id = eth_to_zano(&mut sim, 5);
    sim.submit_withdrawal(0, &id).unwrap();
    let mut kinds = Vec::new();
    for _ in 0..4 {
        let out = sim.run_session();
        let committee = out.committee.clone().unwrap_or_default();
        kinds.push(out.kind.clone());
        if committee.iter().any(|&s| s == 1 || s == 2) {
            assert_eq!(out.kind, OutcomeKind::SigningFailed);
            assert!(out.statuses.iter().all(|s| *s == Some(RequestStatus::Pending)));
        }
        if matches!(out.kind, OutcomeKind::Finalized(_)) {
            break;
        }
    }
    assert!(kinds.contains(&OutcomeKind::Finalized(id)), "{kinds:?}");
}

#[test]
fn lone_forger_cannot_withdraw() {
    let mut flags = honest(4);
    flags[0].forge_deposit = true;
    let mut sim = build(4, flags, false);
    let fake = DepositData {
        source_chain_id: EVM.into(),
        deposit_tx_hash: Hash32::digest(b"never happened"),
        tx_nonce: 0,
        sender: ALICE.into(),
        token_addr: String::new(),
        amount: 999,
        target_chain_id: ZANO.into(),
        target_addr: "ZxMallory".into(),
    };
    sim.inject_forged(&fake);
    for _ in 0..4 {
        assert_ne!(sim.run_session().kind, OutcomeKind::Finalized(fake.identifier()));
    }
    assert_eq!(sim.ledgers.burn_emit(&ZANO.into()).unwrap().supply("zETH"), 0);
}

#[test]
fn rb_delivery_three_ticks_after_proposal() {
    let mut sim = build(4, honest(4), true);
    let id = eth_to_zano(&mut sim, 5);
    sim.submit_withdrawal(0, &id).unwrap();
    sim.run_session();
    let delivers: Vec<_> = sim
        .net
        .log
        .lines()
        .iter()
        .filter(|l| l.contains("kind=rb-deliver") && l.contains("proposal/sid=0@0"))
        .cloned()
        .collect();
    assert_eq!(delivers.len(), 4);
    assert!(delivers.iter().all(|l| l.starts_with("tick=8 ")), "{delivers:?}");
}

#[test]
fn runs_are_reproducible() {
    let run = || {
        let mut sim = build(4, honest(4), true);
        let id = eth_to_zano(&mut sim, 5);
        sim.submit_withdrawal(3, &id).unwrap();
        sim.run_session();
        sim.run_session();
        sim.net.log.lines().to_vec()
    };
    assert_eq!(run(), run());
}
