"""Hotel assistant whose booking call has no failure path."""

# @entry greet
def greet(session):
    return "Which city and dates?"

# @tool search_hotels
# @edge greet -> search_hotels : city and dates known
def search_hotels(session):
    try:
        return hotels_api.search(session["city"], session["dates"])
    except hotels_api.Error:
        return search_failed(session)

# @handler search_failed
# @edge search_hotels -> search_failed : on error
def search_failed(session):
    return "Search is down, please try later."

# @state choose_hotel
# @edge search_hotels -> choose_hotel : results found
def choose_hotel(session, choice):
    return book_hotel(session, choice)

# @tool book_hotel
# @edge choose_hotel -> book_hotel : user picks a hotel
def book_hotel(session, choice):
    confirmation = hotels_api.book(choice)  # raises on payment failure
    return done(session, confirmation)

# @state done
# @edge book_hotel -> done : booking confirmed
def done(session, confirmation):
    return f"Confirmed: {confirmation}"
