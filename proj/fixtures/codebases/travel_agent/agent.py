"""Conversational trip planner: gathers constraints, then plans."""

from tools import search_flights, search_hotels

# @entry greet
def greet(session):
    return "Hi! Where and when would you like to travel, and what is your budget?"

# @state gather_constraints
# @edge greet -> gather_constraints : user replies
# @memory session_constraints
# @edge gather_constraints -> session_constraints : store constraint
def gather_constraints(session, message):
    session.setdefault("constraints", []).extend(extract_constraints(message))
    if missing(session):
        return ask_followup(session)
    return plan(session)

# @state plan
# @edge gather_constraints -> plan : constraints complete
# @edge plan -> tools.py::search_flights : need flights
# @edge plan -> tools.py::search_hotels : need hotels
def plan(session):
    flights = search_flights(session)
    hotels = search_hotels(session)
    return present(session, flights, hotels)

# @state present
# @edge tools.py::search_flights -> present : results
# @edge tools.py::search_hotels -> present : results
def present(session, flights, hotels):
    return render_itinerary(flights, hotels, session["constraints"])
