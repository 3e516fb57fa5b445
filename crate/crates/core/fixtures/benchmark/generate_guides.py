#!/usr/bin/env python3
"""Regenerates the synthetic maintenance guides, cases.json and lexicon.json.

The output is committed; rerun only when changing the corpus, then rerun the
record_benchmark_fixture example to refresh the recorded replies.
"""
import json, os, random, textwrap

OUT = os.path.dirname(os.path.abspath(__file__))
os.makedirs(OUT + "/guides", exist_ok=True)

ASSETS = [
 dict(slug="air_handling_unit", name="Air handling unit",
  desc="Rooftop air handling unit that filters, heats and cools supply air for an office building through ductwork",
  words=['supply air', 'ductwork', 'ventilation'],
  gold=["Supply fan", "Fan belt", "Cooling coil", "Heating coil", "Condensate drain pan", "Outdoor air damper", "Air filter", "Fan motor", "Humidifier", "Duct flexible connector"],
  weak=None),
 dict(slug="centrifugal_pump", name="Centrifugal pump",
  desc="Horizontal centrifugal pump driven by an electric motor that circulates process water through a closed piping loop",
  words=['process water', 'circulating water', 'piping loop'],
  gold=["Impeller", "Volute", "Mechanical seal", "Shaft sleeve", "Wear ring", "Coupling", "Suction strainer", "Discharge valve", "Baseplate", "Lubricating oil"],
  weak=None),
 dict(slug="hammer_drill", name="Hammer drill",
  desc="Corded rotary hammer drill used on concrete and masonry with a pneumatic hammer mechanism and SDS chuck",
  words=['concrete drilling', 'masonry work', 'chiselling'],
  gold=["SDS chuck", "Striker", "Piston", "Carbon brushes", "Commutator", "Slip clutch", "Power cord", "Trigger switch", "Gear grease", "Dust cap"],
  weak=None),
 dict(slug="air_compressor", name="Air compressor",
  desc="Two stage reciprocating air compressor with a receiver tank supplying compressed air to a workshop",
  words=['compressed air', 'receiver tank', 'workshop air'],
  gold=["Intake filter", "Piston rings", "Reed valves", "Crankshaft", "Intercooler", "Pressure switch", "Safety valve", "Drain valve", "Compressor oil", "V-belt"],
  weak=["Unloader", "Check valve"]),
 dict(slug="belt_conveyor", name="Belt conveyor",
  desc="Troughed belt conveyor carrying bulk aggregate from a crusher to a stockpile over idler rollers",
  words=['bulk aggregate', 'stockpile feed', 'crusher discharge'],
  gold=["Head pulley", "Tail pulley", "Carrying idlers", "Return idlers", "Belt splice", "Belt scraper", "Take-up", "Gear reducer", "Skirt board", "Pull cord switch"],
  weak=["Impact bed", "Holdback"]),
 dict(slug="gearbox", name="Industrial gearbox",
  desc="Parallel shaft industrial gearbox reducing motor speed for a mixer drive with splash lubricated gears",
  words=['mixer drive', 'speed reduction', 'splash lubrication'],
  gold=["Input shaft", "Output shaft", "Helical gears", "Rolling bearings", "Oil seals", "Breather", "Oil level sight glass", "Housing joint", "Gear oil", "Torque arm"],
  weak=None),
 dict(slug="diesel_generator", name="Diesel generator",
  desc="Standby diesel generator set providing emergency power to a hospital with an automatic transfer switch",
  words=['standby power', 'emergency power', 'transfer switch'],
  gold=["Fuel injectors", "Fuel filter", "Radiator", "Coolant hoses", "Starter battery", "Alternator", "Exhaust manifold", "Turbocharger", "Engine oil", "Block heater"],
  weak=["Day tank", "Governor"]),
 dict(slug="cooling_tower", name="Cooling tower",
  desc="Induced draft counterflow cooling tower rejecting condenser heat from a chilled water plant",
  words=['condenser water', 'heat rejection', 'induced draft'],
  gold=["Fill media", "Drift eliminators", "Spray nozzles", "Cold water basin", "Fan blades", "Fan gearbox", "Drive shaft", "Makeup water valve", "Basin heater", "Louvers"],
  weak=None),
 dict(slug="electric_motor", name="Electric motor",
  desc="Totally enclosed fan cooled three phase induction motor driving a process fan at constant speed",
  words=['process fan', 'constant speed', 'three phase supply'],
  gold=["Stator winding", "Rotor bars", "Drive end bearing", "Non drive end bearing", "Cooling fan", "Terminal box", "Shaft key", "Grease nipple", "Fan cowl", "Insulation"],
  weak=["Space heater", "Earthing strap"]),
 dict(slug="steam_boiler", name="Steam boiler",
  desc="Fire tube steam boiler burning natural gas to raise saturated steam for a laundry",
  words=['saturated steam', 'boiler water', 'natural gas firing'],
  gold=["Burner", "Fire tubes", "Feedwater pump", "Water level probe", "Pressure relief valve", "Blowdown valve", "Refractory", "Flue gas damper", "Gauge glass", "Flame scanner"],
  weak=None),
 dict(slug="hydraulic_press", name="Hydraulic press",
  desc="Four column hydraulic press forming sheet metal parts with a hydraulic power unit and main cylinder",
  words=['hydraulic oil', 'sheet metal forming', 'press stroke'],
  gold=["Main cylinder", "Piston rod seal", "Hydraulic pump", "Directional valve", "Relief valve", "Accumulator", "Hydraulic hoses", "Return filter", "Guide columns", "Light curtain"],
  weak=["Oil cooler", "Prefill valve"]),
 dict(slug="chiller", name="Water chiller",
  desc="Water cooled screw chiller producing chilled water for building air conditioning with refrigerant R134a",
  words=['chilled water', 'refrigerant circuit', 'air conditioning'],
  gold=["Screw compressor", "Evaporator tubes", "Condenser tubes", "Expansion valve", "Refrigerant charge", "Oil separator", "Flow switch", "Control panel", "Vibration isolators", "Compressor motor"],
  weak=None),
]

TEMPLATES = [
 "During the scheduled inspection of the {a} the technician examines the {e1} and the {e2}. On a {a} of this kind the {e1} is loaded during every hour of {w1} service, so early distress appears as noise, heat or discoloration. Record the condition of the {e2} on the {a} inspection sheet together with the running hours and compare it with the previous entry. A {a} that handles {w2} continuously needs a shorter interval, and the {e1} should be checked again after every trip.",
 "The {e1} and the {e2} are the parts of the {a} most often found damaged at overhaul. Look at the {e1} for cracks, corrosion and loose fixings while the {a} is isolated and locked out. The {e2} wears faster when the {w1} duty is heavy or when the {a} cycles frequently. Replace the {e2} with the part listed for this {a} model and note the {w2} conditions observed at the time, since they help explain why the {e1} or the {e2} degraded.",
 "Operators of the {a} should watch the {e1} and the {e2} between planned visits. Abnormal {w1} readings usually point to a problem at the {e1}, while leaks, rubbing or vibration near the {e2} indicate that the {a} needs attention. Keep the area around the {a} clean so that the {e2} can be seen, and report any change in {w2} behaviour. Never run the {a} with a damaged {e1}, because secondary damage spreads quickly through the rest of the {a}.",
 "When the {a} is opened for the annual service, clean and measure the {e1}. Compare the readings with the limits in the {a} data sheet and renew the {e1} if it is outside tolerance. Check the {e2} for wear, deposits and fatigue marks, and confirm that the {w1} arrangement around the {e2} is correct. After reassembly run the {a} at normal {w2} load for one hour and check the {e1} and the {e2} again for temperature, leaks and unusual sounds.",
 "Most unplanned stops of a {a} start at the {e1} or at the {e2}. Contamination, poor alignment and overload all shorten the life of the {e1} on a {a}. The {e2} suffers from ageing and from the {w1} environment, and its condition should be trended rather than judged from a single visit. Use the history of the {a} to plan spares for the {e1} and the {e2}, and keep at least one spare of each on site for every {a} that supports {w2}.",
 "Safety checks on the {a} include the {e1} and the {e2}. A faulty {e1} can leave the {a} running in an unsafe state, so test it with the {a} stopped and then at reduced {w1} load. Inspect the {e2} for damage and make sure it is fitted in the position shown on the {a} drawings. Write down the results of both tests in the {a} log. Where {w2} is critical, a second person should witness the test of the {e1}.",
]

WEAK = "Some faults reported by users are caused by the {e1} or the {e2} rather than by the main machine. Check the {e1} when the fault appears only after long periods of standstill, and check the {e2} when it appears only at full load. Both are inexpensive and quick to replace, so they are often changed on suspicion during a visit."

IRRELEVANT = [
 "Delivery and storage. The equipment is shipped on a wooden pallet and wrapped in film. On arrival compare the delivery note with the purchase order and photograph any transport damage before signing. Store the crate indoors on a level floor, away from frost, direct sunlight and chemicals. If storage will last longer than six months, contact the supplier for instructions and keep the original packing until commissioning has been completed and accepted by the customer.",
 "Warranty terms. The warranty period is twenty four months from delivery or eighteen months from commissioning, whichever ends first. Claims must be submitted in writing with the serial number, the date of the fault, and copies of the service records. The warranty does not cover consumables, damage from incorrect installation, unauthorised modifications or use outside the published ratings. Travel time and expenses of service engineers are charged separately unless agreed otherwise.",
 "Training and documentation. Only trained and authorised personnel may carry out the tasks described in this guide. Keep this guide near the equipment and make sure that every shift knows where to find it. Training records should list the name of each person, the date of the course and the topics covered. When a new revision of this guide is issued, withdraw the old copies and brief the staff on the changes listed in the revision table at the front of the document.",
 "Ordering and contacts. To order spares, quote the serial number from the rating plate, the part number from the spare parts list and the quantity required. Orders received before noon are normally dispatched the same day from the regional warehouse. For technical questions call the service hotline during office hours or send an email with photographs. Emergency call-out is available at all times under a service agreement, and the response time is stated in that agreement.",
 "Environmental notes. Collect used oil, filters, cleaning cloths and packaging separately and hand them to a licensed waste contractor. Do not pour liquids into drains or onto soil. Batteries and electronic boards must be returned through the local take back scheme. At the end of its life the equipment can be dismantled and most metals recycled; a dismantling sheet is available on request from the manufacturer together with a declaration of the substances used.",
]

PAGE_HEADER = "{n} Maintenance Guide, Revision 3"
ZERO_SHOT = "1. Motor\n2. Bearing\n3. Housing\n4. Seal\n5. Control panel"

def render(asset, rng):
    a = asset["name"].lower()
    gold = asset["gold"]
    words = asset["words"]
    paras = []
    for i in range(5):
        t = TEMPLATES[(i + rng.randrange(6)) % 6]
        w1, w2 = rng.sample(words, 2)
        paras.append(("rel", t.format(a=a, e1=gold[2*i].lower(), e2=gold[2*i+1].lower(), w1=w1, w2=w2)))
    if asset["weak"]:
        w = asset["weak"]
        paras.append(("weak", WEAK.format(e1=w[0].lower(), e2=w[1].lower())))
    irr = rng.sample(IRRELEVANT, 4)
    body = [("irr", irr[0]), ("irr", irr[1])] + paras + [("irr", irr[2]), ("irr", irr[3])]
    # interleave: keep two irrelevant first, then relevant with one irrelevant in the middle
    order = body[:2] + body[2:5] + [body[-2]] + body[5:-2] + [body[-1]]
    pages, cur = [], []
    for kind, text in order:
        cur.append(text)
        if len(cur) == 2:
            pages.append(cur); cur = []
    if cur: pages.append(cur)
    return order, pages

def distractor_table(asset, others):
    rows = []
    for o in others:
        for e in o["gold"][:2]:
            rows.append((o["name"], e, "See separate guide"))
    lines = ["Table 1: Spare parts stocked for other equipment on site", "",
             "| Equipment | Part | Reference |", "|---|---|---|"]
    lines += [f"| {a} | {b} | {c} |" for a, b, c in rows]
    return "\n".join(lines)

cases = []
rng = random.Random(7)
for idx, asset in enumerate(ASSETS):
    others = [ASSETS[(idx + k) % len(ASSETS)] for k in (1, 2, 3)]
    order, pages = render(asset, rng)
    total = len(pages) + 1
    out = [f"# {asset['name']} Maintenance Guide", "",
           f"This guide covers routine care of the {asset['name'].lower()}.", ""]
    for pi, page in enumerate(pages):
        if pi > 0:
            out += ["\f" + PAGE_HEADER.format(n=asset["name"]), ""]
        for j, p in enumerate(page):
            out += [f"## Section {pi + 1}.{j + 1}", "", p, ""]
        out += [f"Page {pi + 1} of {total}", ""]
    out += ["\f" + PAGE_HEADER.format(n=asset["name"]), "", distractor_table(asset, others), "",
            f"Page {total} of {total}"]
    path = f"guides/{asset['slug']}.md"
    with open(f"{OUT}/{path}", "w") as f:
        f.write("\n".join(out) + "\n")
    gold = asset["gold"] + (asset["weak"] or [])
    distractors = [e for o in others for e in o["gold"][:2]]
    cases.append(dict(asset_name=asset["name"], asset_description=asset["desc"],
                      guide_document_path=path, gold_failure_locations=gold,
                      distractor_entities=distractors))

with open(f"{OUT}/cases.json", "w") as f:
    json.dump([{k: v for k, v in c.items() if k != "distractor_entities"} for c in cases], f, indent=2)
    f.write("\n")
with open(f"{OUT}/lexicon.json", "w") as f:
    json.dump({"zero_shot_reply": ZERO_SHOT,
               "entities": sorted({e for c in cases for e in c["gold_failure_locations"]})}, f, indent=2)
    f.write("\n")
